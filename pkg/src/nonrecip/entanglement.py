"""Partial-transpose negativity and the entangling power of non-reciprocal couplings."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .config import settings
from .errors import CutoffTooSmallError, InvalidArgumentError, InvalidCouplingError
from .feedforward import FeedforwardSpec, unconditional_generator
from .fock import (
    Bipartition,
    FockOperator,
    FockSpace,
    basis_state,
    is_hermitian,
    local_operator,
    mode_annihilation,
    partial_transpose,
)
from .lindblad import (
    DensityMatrix,
    Directional,
    Evolution,
    LindbladModel,
    build_nonreciprocal,
    evolve,
    steady_state,
)

__all__ = [
    "Bipartition",
    "negativity",
    "logarithmic_negativity",
    "negativity_trace",
    "locc_suite",
    "entangling_control_case",
    "cascaded_entanglement_scenario",
    "dissipator_decomposition_gap",
]

logger = logging.getLogger(__name__)

LOCC_THRESHOLD = 1e-9
TOP_POPULATION_LIMIT = 1e-4
MIN_SCENARIO_CUTOFF = 5


# ============================================================================
# Negativity
# ============================================================================


def _pt_spectrum(rho: Union[DensityMatrix, np.ndarray], cut: Bipartition, space: FockSpace) -> np.ndarray:
    matrix = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    transposed = partial_transpose(matrix, space, cut.second)
    return np.linalg.eigvalsh(0.5 * (transposed + transposed.conj().T))


def negativity(rho: DensityMatrix, cut: Bipartition) -> float:
    """(||rho^T2||_1 - 1)/2, the summed magnitude of negative partial-transpose eigenvalues."""
    spectrum = _pt_spectrum(rho, cut, rho.space)
    return max(0.0, float(-spectrum[spectrum < 0].sum()))


def logarithmic_negativity(rho: DensityMatrix, cut: Bipartition) -> float:
    return math.log2(2.0 * negativity(rho, cut) + 1.0)


def negativity_trace(evolution: Evolution, cut: Bipartition) -> np.ndarray:
    values = [
        max(0.0, float(-s[s < 0].sum()))
        for s in (_pt_spectrum(state, cut, evolution.space) for state in evolution.states)
    ]
    return np.array(values)


# ============================================================================
# LOCC decomposition
# ============================================================================


def dissipator_decomposition_gap(model: LindbladModel) -> float:
    """
    Distance between a directional model and measurement plus feedforward.

    With Hermitian O1, O2 the upper-sign model equals measuring O1 at
    k = 4 lam eta and forcing with O2 at gamma = lam / eta; the lower sign
    swaps the roles of the subsystems. Extra Hamiltonian terms and extra
    jumps are kept on both sides. Returns the largest entry of the
    difference between the two Liouvillians.
    """
    c = model.coupling
    if c is None or c.conjugated:
        raise InvalidCouplingError("decomposition needs a model built with the directional variant")
    if not (is_hermitian(c.o1) and is_hermitian(c.o2)):
        raise InvalidCouplingError("measurement-plus-feedforward form needs Hermitian O1 and O2")
    eta = abs(c.c1) ** 2
    orientation = 1j * c.c2 * abs(c.c1)
    skewed = abs(abs(orientation) - 1.0) > 1e-12 or abs(orientation.imag) > 1e-12
    if skewed or abs(c.rate - c.lam) > 1e-12:
        raise InvalidCouplingError("decomposition needs a model built with the directional variant")
    sign = 1 if orientation.real > 0 else -1
    if sign == 1:
        spec = FeedforwardSpec(c.o1, c.o2, 4.0 * c.lam * eta, c.lam / eta, dt=1.0, cut=c.cut)
    else:
        swapped = Bipartition(c.cut.second, c.cut.first)
        spec = FeedforwardSpec(c.o2, c.o1, 4.0 * c.lam / eta, c.lam * eta, dt=1.0, cut=swapped)
    rest = LindbladModel(model.space, model.hamiltonian - c.coherent, model.jumps[1:])
    local = unconditional_generator(spec).liouvillian() + rest.liouvillian()
    return float(np.max(np.abs(model.liouvillian() - local)))


def _random_hermitian(rng: np.random.Generator, dim: int, scale: float = 1.0) -> np.ndarray:
    raw = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (raw + raw.conj().T) / math.sqrt(dim)


def _random_ket(rng: np.random.Generator, dim: int) -> np.ndarray:
    ket = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return ket / np.linalg.norm(ket)


def _case_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class LoccCase:
    seed: int
    dims: tuple
    lam: float
    eta: float
    sign: int
    max_negativity: float
    decomposition_gap: float

    @property
    def passed(self) -> bool:
        return self.max_negativity < LOCC_THRESHOLD

    def to_dict(self) -> Dict[str, Any]:
        return {"seed": self.seed, "max_negativity": self.max_negativity, "pass": self.passed}


@dataclass(frozen=True)
class LoccSuiteReport:
    cases: List[LoccCase]

    @property
    def max_negativity(self) -> float:
        return max((case.max_negativity for case in self.cases), default=0.0)

    @property
    def passed(self) -> bool:
        return all(case.passed for case in self.cases)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "cases": [case.to_dict() for case in self.cases],
            "max_negativity": self.max_negativity,
            "pass": self.passed,
        }


def _locc_case(seed: int, t_final: float, dt: float) -> LoccCase:
    rng = np.random.Generator(np.random.Philox(seed))
    d1, d2 = (int(d) for d in rng.integers(2, 5, size=2))
    space = FockSpace(2, (d1 - 1, d2 - 1))
    cut = Bipartition.default(space)
    o1 = local_operator(space, _random_hermitian(rng, d1), 1, "O1")
    o2 = local_operator(space, _random_hermitian(rng, d2), 2, "O2")
    h1 = local_operator(space, _random_hermitian(rng, d1), 1, "H1")
    h2 = local_operator(space, _random_hermitian(rng, d2), 2, "H2")
    lam = float(rng.uniform(0.2, 2.0))
    eta = float(math.exp(rng.uniform(-1.5, 1.5)))
    sign = 1 if rng.random() < 0.5 else -1

    model = build_nonreciprocal(o1, o2, lam, Directional(eta, sign), cut).with_hamiltonian(h1 + h2)
    ket = np.kron(_random_ket(rng, d1), _random_ket(rng, d2))
    run = evolve(model, DensityMatrix.pure(space, ket), t_final, dt, method="expm")
    return LoccCase(
        seed=seed,
        dims=(d1, d2),
        lam=lam,
        eta=eta,
        sign=sign,
        max_negativity=float(negativity_trace(run, cut).max()),
        decomposition_gap=dissipator_decomposition_gap(model),
    )


def locc_suite(num_cases: int, seed: int, t_final: float = 2.0, dt: float = 0.05) -> LoccSuiteReport:
    """
    Random Hermitian-coupling directional models evolved from product states.

    Args:
        num_cases: Number of random cases
        seed: Suite seed; case i uses a seed derived from (seed, i)
        t_final: Evolution time per case
        dt: Sampling step of the negativity trace

    Returns:
        LoccSuiteReport with the per-case maximum negativity
    """
    if num_cases < 0:
        raise InvalidArgumentError(f"num_cases must be non-negative, got {num_cases}")
    seeds = [_case_seed(seed, i) for i in range(num_cases)]
    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        cases = list(pool.map(lambda s: _locc_case(s, t_final, dt), seeds))
    report = LoccSuiteReport(cases)
    logger.info(
        f"LOCC suite: {num_cases} cases, max negativity {report.max_negativity:.3e}, "
        f"{'pass' if report.passed else 'FAIL'}"
    )
    return report


# ============================================================================
# Cascaded two-photon-driven scenario
# ============================================================================


def _cascaded_model(lam: float, drive1: complex, drive2: complex, space: FockSpace) -> LindbladModel:
    a1, a2 = mode_annihilation(space, 1), mode_annihilation(space, 2)
    model = build_nonreciprocal(a1, a2.adjoint(), lam, Directional(1.0, 1))
    drives = FockOperator(space, np.zeros((space.dimension,) * 2), "0")
    for amp, a in ((complex(drive1), a1), (complex(drive2), a2)):
        pump = amp * (a.adjoint() ** 2)
        drives = drives + 0.5 * (pump + pump.adjoint())
    return model.with_hamiltonian(drives.relabel("H_drive"))


@dataclass(frozen=True, eq=False)
class EntanglementScenario:
    model: LindbladModel
    state: DensityMatrix
    negativity: float
    top_population: float
    cutoff_shift: float  # N(cutoff) - N(cutoff - 1)


def _solve_scenario(
    lam: float, drive1: complex, drive2: complex, cutoff: int
) -> Tuple[LindbladModel, DensityMatrix, float, float]:
    space = FockSpace(2, cutoff)
    model = _cascaded_model(lam, drive1, drive2, space)
    state = steady_state(model)
    top = max(float(state.reduced([m]).diagonal()[-1].real) for m in space.modes)
    return model, state, negativity(state, Bipartition.default(space)), top


def cascaded_entanglement_scenario(
    lam: float,
    drive1: complex,
    drive2: complex,
    cutoff: int,
    max_shift: Optional[float] = None,
) -> EntanglementScenario:
    """
    Steady state of the cascaded pair O1 = a1, O2 = a2^dag with two-photon drives.

    The negativity approaches its untruncated value from below as the cutoff
    grows; the step from cutoff - 1 is reported as cutoff_shift.

    Args:
        lam: Coupling strength
        drive1: Two-photon drive amplitude on mode 1
        drive2: Two-photon drive amplitude on mode 2
        cutoff: Fock cutoff per mode (at least 5)
        max_shift: Largest accepted |cutoff_shift|; None skips the check

    Returns:
        EntanglementScenario with the steady state and its negativity across 1|2
    """
    if cutoff < MIN_SCENARIO_CUTOFF:
        raise InvalidArgumentError(f"cutoff must be at least {MIN_SCENARIO_CUTOFF}, got {cutoff}")
    if lam <= 0:
        raise InvalidArgumentError(f"lam must be positive, got {lam}")
    model, state, value, top = _solve_scenario(lam, drive1, drive2, cutoff)
    if top >= TOP_POPULATION_LIMIT:
        raise CutoffTooSmallError(
            f"top Fock level holds population {top:.3e} at cutoff {cutoff}", top_population=top
        )
    shift = value - _solve_scenario(lam, drive1, drive2, cutoff - 1)[2]
    if max_shift is not None and abs(shift) > max_shift:
        raise CutoffTooSmallError(
            f"negativity moved by {shift:.3e} between cutoffs {cutoff - 1} and {cutoff}",
            top_population=top,
            cutoff_shift=shift,
        )
    logger.info(
        f"Cascaded scenario at cutoff {cutoff}: negativity {value:.10f}, "
        f"top population {top:.2e}, cutoff shift {shift:.2e}"
    )
    return EntanglementScenario(model, state, value, top, shift)


def entangling_control_case(
    lam: float = 1.0,
    drive: complex = 0.2j,
    cutoff: int = 3,
    t_final: float = 4.0,
    dt: float = 0.1,
) -> Tuple[np.ndarray, np.ndarray]:
    """Sample times and negativity of the driven cascaded pair started in vacuum."""
    space = FockSpace(2, cutoff)
    model = _cascaded_model(lam, drive, drive, space)
    vacuum = DensityMatrix.pure(space, basis_state(space, [0, 0]))
    run = evolve(model, vacuum, t_final, dt, method="expm")
    return run.times, negativity_trace(run, Bipartition.default(space))

