"""Continuous weak measurement with instantaneous feedforward."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .config import settings
from .errors import InvalidArgumentError, InvalidCouplingError, StepSizeError
from .fock import Bipartition, FockOperator, FockSpace, acts_only_on, is_hermitian
from .lindblad import (
    DensityMatrix,
    Directional,
    LindbladModel,
    build_nonreciprocal,
    evolve,
    superoperator_from_map,
)

logger = logging.getLogger(__name__)

STEP_GUARD = 0.01
TRACE_TOL = 1e-12


# ============================================================================
# Parameters
# ============================================================================


@dataclass(frozen=True, eq=False)
class FeedforwardSpec:
    """Measured observable A1 on subsystem 1, forcing F2 on subsystem 2."""

    a1: FockOperator
    f2: FockOperator
    k: float
    gamma: float
    dt: float
    seed: int = 0
    cut: Optional[Bipartition] = None

    def __post_init__(self) -> None:
        if self.a1.space != self.f2.space:
            raise InvalidArgumentError("A1 and F2 live on different spaces")
        cut = self.cut or Bipartition.default(self.a1.space)
        object.__setattr__(self, "cut", cut)
        for name, op in (("A1", self.a1), ("F2", self.f2)):
            if not is_hermitian(op):
                raise InvalidArgumentError(f"{name} = {op.label} is not Hermitian")
        if not acts_only_on(self.a1, cut.first):
            raise InvalidCouplingError(f"A1 = {self.a1.label} acts outside subsystem {cut.first}")
        if not acts_only_on(self.f2, cut.second):
            raise InvalidCouplingError(f"F2 = {self.f2.label} acts outside subsystem {cut.second}")
        if self.k < 0 or self.gamma < 0:
            raise InvalidArgumentError(f"rates must be non-negative, got k={self.k}, gamma={self.gamma}")
        if self.dt <= 0:
            raise InvalidArgumentError(f"dt must be positive, got {self.dt}")
        if self.seed < 0:
            raise InvalidArgumentError(f"seed must be non-negative, got {self.seed}")

    @property
    def space(self) -> FockSpace:
        return self.a1.space

    def check_step(self) -> None:
        for name, rate in (("k", self.k), ("gamma", self.gamma)):
            if rate * self.dt >= STEP_GUARD:
                raise StepSizeError(
                    f"{name}*dt = {rate * self.dt:.3g} must stay below {STEP_GUARD}",
                    bound=f"{name}*dt < {STEP_GUARD}",
                    value=rate * self.dt,
                )


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Measurement record and conditional expectations of one trajectory."""

    index: int
    times: np.ndarray
    d_i: np.ndarray
    d_w: np.ndarray
    a1_mean: np.ndarray
    f2_mean: np.ndarray
    observables: Dict[str, np.ndarray]
    final: np.ndarray

    def rows(self) -> List[Tuple[float, float, float, float]]:
        """(time, dI, <A1>, <F2>) per step."""
        return [
            (float(t), float(di), float(a), float(f))
            for t, di, a, f in zip(self.times[:-1], self.d_i, self.a1_mean, self.f2_mean)
        ]


def equivalence_parameters(k: float, gamma: float) -> Tuple[float, float]:
    """(lam, eta) of the directional model reproducing measurement plus feedforward."""
    if k <= 0 or gamma <= 0:
        raise InvalidArgumentError(f"k and gamma must be positive, got k={k}, gamma={gamma}")
    return math.sqrt(k * gamma / 4.0), math.sqrt(k / (4.0 * gamma))


def feedforward_rates(lam: float, eta: float) -> Tuple[float, float]:
    """Inverse of equivalence_parameters: k = 4 lam eta, gamma = lam / eta."""
    if lam <= 0 or eta <= 0:
        raise InvalidArgumentError(f"lam and eta must be positive, got lam={lam}, eta={eta}")
    return 4.0 * lam * eta, lam / eta


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for trajectory `index` of ensemble `seed`."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


# ============================================================================
# Conditional evolution
# ============================================================================


class _Kernel:
    """Dense matrices reused by every step of a spec."""

    def __init__(self, spec: FeedforwardSpec) -> None:
        self.a = spec.a1.matrix
        self.a_sq = self.a @ self.a
        self.f = math.sqrt(spec.gamma) * spec.f2.matrix
        self.sqrt_k = math.sqrt(spec.k)
        self.k = spec.k

    def forcing(self, rho: np.ndarray) -> np.ndarray:
        return -1j * (self.f @ rho - rho @ self.f)

    def step(self, rho: np.ndarray, dt: float, d_w: float) -> Tuple[np.ndarray, float, float]:
        mean = float(np.trace(self.a @ rho).real)
        a_rho, rho_a = self.a @ rho, rho @ self.a
        backaction = a_rho @ self.a - 0.5 * (self.a_sq @ rho + rho @ self.a_sq)
        innovation = a_rho + rho_a - 2.0 * mean * rho
        measured = rho + 0.25 * self.k * dt * backaction + 0.5 * self.sqrt_k * d_w * innovation

        d_i = self.sqrt_k * mean * dt + d_w
        once = self.forcing(measured)
        forced = measured + d_i * once + 0.5 * dt * self.forcing(once)
        forced = 0.5 * (forced + forced.conj().T)
        return forced / np.trace(forced).real, d_i, mean


def conditional_step(rho: DensityMatrix, spec: FeedforwardSpec, d_w: float) -> DensityMatrix:
    """
    One conditional update: measurement of A1, then feedforward with F2.

    Args:
        rho: Current conditional state
        spec: Measurement and feedforward parameters
        d_w: Wiener increment of this step

    Returns:
        Renormalized conditional state after the step
    """
    if rho.space != spec.space:
        raise InvalidArgumentError("state lives on a different space than the feedforward operators")
    new, _, _ = _Kernel(spec).step(rho.matrix, spec.dt, d_w)
    return DensityMatrix(spec.space, new)


def simulate_trajectory(
    spec: FeedforwardSpec,
    rho0: DensityMatrix,
    t_final: float,
    index: int = 0,
    observables: Optional[Mapping[str, FockOperator]] = None,
) -> TrajectoryRecord:
    """Euler-Maruyama chain of conditional steps with dW drawn from trajectory_rng."""
    spec.check_step()
    if rho0.space != spec.space:
        raise InvalidArgumentError("initial state lives on a different space than the feedforward operators")
    steps = max(0, math.ceil(t_final / spec.dt - 1e-9))
    h = t_final / steps if steps else spec.dt
    kernel = _Kernel(spec)
    d_w = trajectory_rng(spec.seed, index).normal(0.0, math.sqrt(h), size=steps)
    f2 = spec.f2.matrix
    tracked = {name: op.matrix for name, op in (observables or {}).items()}

    rho = rho0.matrix.copy()
    d_i = np.empty(steps)
    a1_mean = np.empty(steps)
    f2_mean = np.empty(steps)
    values = {name: np.empty(steps + 1) for name in tracked}
    for name, op in tracked.items():
        values[name][0] = np.trace(op @ rho).real
    for n in range(steps):
        f2_mean[n] = np.trace(f2 @ rho).real
        rho, d_i[n], a1_mean[n] = kernel.step(rho, h, d_w[n])
        for name, op in tracked.items():
            values[name][n + 1] = np.trace(op @ rho).real
    return TrajectoryRecord(
        index=index,
        times=h * np.arange(steps + 1),
        d_i=d_i,
        d_w=d_w,
        a1_mean=a1_mean,
        f2_mean=f2_mean,
        observables=values,
        final=rho,
    )


# ============================================================================
# Unconditional generator
# ============================================================================


@dataclass(frozen=True, eq=False)
class FeedforwardGenerator:
    """
    Average over measurement outcomes of the conditional dynamics.

    apply() evaluates the affine form with its <A1> terms kept explicitly;
    they cancel between the drift and the noise-correlation pieces.
    """

    spec: FeedforwardSpec
    _kernel: _Kernel = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_kernel", _Kernel(self.spec))

    @property
    def space(self) -> FockSpace:
        return self.spec.space

    def apply(self, rho: np.ndarray) -> np.ndarray:
        kern = self._kernel
        a = kern.a
        mean = np.trace(a @ rho)
        backaction = a @ rho @ a - 0.5 * (kern.a_sq @ rho + rho @ kern.a_sq)
        forced = kern.forcing(rho)
        innovation = 0.5 * kern.sqrt_k * (a @ rho + rho @ a - 2.0 * mean * rho)
        return (
            0.25 * kern.k * backaction
            + kern.sqrt_k * mean * forced
            + 0.5 * kern.forcing(forced)
            + kern.forcing(innovation)
        )

    @cached_property
    def _liouvillian(self) -> np.ndarray:
        return superoperator_from_map(self.apply, self.space.dimension)

    def liouvillian(self) -> np.ndarray:
        return self._liouvillian

    def rate_bound(self) -> float:
        a_norm = np.linalg.norm(self.spec.a1.matrix, 2)
        f_norm = np.linalg.norm(self.spec.f2.matrix, 2)
        k, g = self.spec.k, self.spec.gamma
        return float(0.25 * k * a_norm**2 + g * f_norm**2 + 2.0 * math.sqrt(k * g) * a_norm * f_norm)


def unconditional_generator(spec: FeedforwardSpec) -> FeedforwardGenerator:
    return FeedforwardGenerator(spec)


def directional_model(spec: FeedforwardSpec) -> LindbladModel:
    """Directional master equation with the feedforward identification of lam and eta."""
    lam, eta = equivalence_parameters(spec.k, spec.gamma)
    return build_nonreciprocal(spec.a1, spec.f2, lam, Directional(eta, 1), spec.cut)


# ============================================================================
# Ensembles
# ============================================================================


@dataclass(frozen=True, eq=False)
class ObservableSeries:
    name: str
    mean: np.ndarray
    stderr: np.ndarray


@dataclass(frozen=True, eq=False)
class EnsembleReport:
    num_trajectories: int
    dt: float
    times: np.ndarray
    observables: List[ObservableSeries]

    def series(self, name: str) -> ObservableSeries:
        for entry in self.observables:
            if entry.name == name:
                return entry
        raise InvalidArgumentError(f"observable '{name}' was not tracked")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "N": self.num_trajectories,
            "dt": self.dt,
            "observables": [
                {
                    "name": entry.name,
                    "times": self.times.tolist(),
                    "mean": entry.mean.tolist(),
                    "stderr": entry.stderr.tolist(),
                }
                for entry in self.observables
            ],
        }


def _pairwise_mean(samples: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # rows are trajectories; contiguous rows of the transpose sum pairwise
    columns = np.ascontiguousarray(samples.T)
    n = samples.shape[0]
    mean = columns.sum(axis=1) / n
    if n < 2:
        return mean, np.zeros_like(mean)
    spread = ((columns - mean[:, None]) ** 2).sum(axis=1) / (n - 1)
    return mean, np.sqrt(spread / n)


def run_ensemble(
    spec: FeedforwardSpec,
    rho0: DensityMatrix,
    t_final: float,
    num_trajectories: int,
    observables: Mapping[str, FockOperator],
) -> EnsembleReport:
    """
    Average independent trajectories seeded by (spec.seed, index).

    Args:
        spec: Measurement and feedforward parameters
        rho0: Initial state shared by every trajectory
        t_final: End time
        num_trajectories: Ensemble size
        observables: Named Hermitian observables to track

    Returns:
        EnsembleReport with means and standard errors on the step grid
    """
    if num_trajectories < 1:
        raise InvalidArgumentError(f"need at least one trajectory, got {num_trajectories}")
    spec.check_step()

    def run(index: int) -> TrajectoryRecord:
        return simulate_trajectory(spec, rho0, t_final, index, observables)

    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        records = list(pool.map(run, range(num_trajectories)))

    series = []
    for name in observables:
        mean, stderr = _pairwise_mean(np.array([r.observables[name] for r in records]))
        series.append(ObservableSeries(name, mean, stderr))
    logger.info(
        f"Ensemble of {num_trajectories} trajectories to t={t_final:g} "
        f"(dt={spec.dt:g}, {settings.threads} threads)"
    )
    return EnsembleReport(num_trajectories, spec.dt, records[0].times, series)


@dataclass(frozen=True)
class ObservableCheck:
    name: str
    deviation: float
    stderr: float
    passed: bool


def compare_with_generator(
    report: EnsembleReport,
    spec: FeedforwardSpec,
    rho0: DensityMatrix,
    observables: Mapping[str, FockOperator],
    checkpoints: Sequence[int] = (-1,),
    sigmas: float = 3.0,
    atol: float = 0.0,
) -> List[ObservableCheck]:
    """Ensemble means against the unconditional generator at the chosen time indices."""
    t_final = float(report.times[-1])
    steps = len(report.times) - 1
    exact = evolve(unconditional_generator(spec), rho0, t_final, t_final / max(steps, 1), method="expm")
    checks = []
    for name, op in observables.items():
        entry = report.series(name)
        reference = exact.expect(op).real
        worst = ObservableCheck(name, 0.0, 0.0, True)
        for index in checkpoints:
            deviation = float(abs(entry.mean[index] - reference[index]))
            stderr = float(entry.stderr[index])
            passed = deviation <= sigmas * stderr + atol
            if not passed or deviation > worst.deviation:
                worst = ObservableCheck(name, deviation, stderr, passed and worst.passed)
        checks.append(worst)
        logger.info(f"Observable {name}: deviation {worst.deviation:.3e}, stderr {worst.stderr:.3e}")
    return checks


@dataclass(frozen=True)
class ItoCheck:
    name: str
    discrepancy: float
    discrepancy_half: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return abs(self.discrepancy - self.discrepancy_half) < self.tolerance


def ito_convergence_check(
    spec: FeedforwardSpec,
    rho0: DensityMatrix,
    t_final: float,
    num_trajectories: int,
    observables: Mapping[str, FockOperator],
) -> List[ItoCheck]:
    """Final-time discrepancy against the generator at dt and dt/2."""
    halved = FeedforwardSpec(spec.a1, spec.f2, spec.k, spec.gamma, spec.dt / 2.0, spec.seed, spec.cut)
    runs = []
    for current in (spec, halved):
        report = run_ensemble(current, rho0, t_final, num_trajectories, observables)
        runs.append((report, compare_with_generator(report, current, rho0, observables)))
    (_, coarse), (_, fine) = runs
    checks = []
    for a, b in zip(coarse, fine):
        tolerance = 3.0 * math.hypot(a.stderr, b.stderr)
        checks.append(ItoCheck(a.name, a.deviation, b.deviation, tolerance))
    return checks
