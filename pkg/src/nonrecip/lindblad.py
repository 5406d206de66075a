"""Lindblad master equations: construction, integration, steady states and reductions."""

import cmath
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, List, NamedTuple, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import expm, lu_factor, lu_solve
from scipy.linalg.lapack import zgecon
from scipy.sparse.linalg import LinearOperator, svds

from . import lattice
from .errors import (
    IntegrationError,
    InvalidArgumentError,
    InvalidCouplingError,
    InvalidModelError,
    NonUniqueSteadyStateError,
    NumericalSingularityError,
    StepSizeError,
)
from .fock import (
    HERMITIAN_TOL,
    Bipartition,
    FockOperator,
    FockSpace,
    acts_only_on,
    basis_state,
    identity,
    is_hermitian,
    mode_annihilation,
    parse_operator,
    reduced_state,
)

logger = logging.getLogger(__name__)

STATE_TOL = 1e-10
EIGENVALUE_FLOOR = -1e-8
RK4_GUARD = 0.1
TRACE_DRIFT_TOL = 1e-8
SINGULAR_VALUE_GAP = 1e-8
RCOND_FLOOR = 1e-13
RESIDUAL_TOL = 1e-10
SVD_LIMIT = 1024


# ============================================================================
# States and vectorization
# ============================================================================


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(rho).reshape(-1, order="F")


def unvec(vector: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(vector).reshape(dim, dim, order="F")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Unit-trace Hermitian state on a Fock space."""

    space: FockSpace
    matrix: np.ndarray

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=complex)
        d = self.space.dimension
        if matrix.shape != (d, d):
            raise InvalidArgumentError(f"state shape {matrix.shape} does not match dimension {d}")
        trace = np.trace(matrix)
        if abs(trace - 1.0) > STATE_TOL:
            raise InvalidArgumentError(f"state trace {trace:.3e} differs from 1")
        if np.max(np.abs(matrix - matrix.conj().T)) > STATE_TOL:
            raise InvalidArgumentError("state is not Hermitian")
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def pure(cls, space: FockSpace, ket: np.ndarray) -> "DensityMatrix":
        ket = np.asarray(ket, dtype=complex)
        ket = ket / np.linalg.norm(ket)
        return cls(space, np.outer(ket, ket.conj()))

    @classmethod
    def fock(cls, space: FockSpace, occupations: Sequence[int]) -> "DensityMatrix":
        return cls.pure(space, basis_state(space, occupations))

    @classmethod
    def normalized(cls, space: FockSpace, matrix: np.ndarray) -> "DensityMatrix":
        """Hermitize and rescale an arbitrary positive matrix."""
        matrix = 0.5 * (matrix + np.conj(matrix).T)
        return cls(space, matrix / np.trace(matrix).real)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def check_positive(self) -> "DensityMatrix":
        low = self.min_eigenvalue()
        if low < EIGENVALUE_FLOOR:
            raise InvalidArgumentError(f"state has eigenvalue {low:.3e} below {EIGENVALUE_FLOOR}")
        return self

    def expect(self, op: FockOperator) -> complex:
        return op.expect(self.matrix)

    def reduced(self, modes: Sequence[int]) -> np.ndarray:
        return reduced_state(self.matrix, self.space, modes)


def _matrix_of(rho: Union[DensityMatrix, np.ndarray]) -> np.ndarray:
    return rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)


def dissipator(jump: FockOperator, rho: Union[DensityMatrix, np.ndarray]) -> np.ndarray:
    """D[L] rho = L rho L^dag - {L^dag L, rho}/2."""
    if isinstance(rho, DensityMatrix) and rho.space != jump.space:
        raise InvalidArgumentError("jump operator and state live on different spaces")
    r = _matrix_of(rho)
    if r.shape != jump.matrix.shape:
        raise InvalidArgumentError(f"state shape {r.shape} does not match operator")
    ell = jump.matrix
    ldl = ell.conj().T @ ell
    return ell @ r @ ell.conj().T - 0.5 * (ldl @ r + r @ ldl)


def superoperator_from_map(fn: Callable[[np.ndarray], np.ndarray], dim: int) -> np.ndarray:
    """Matrix of a linear map on d x d matrices in the column-stacking basis."""
    columns = np.empty((dim * dim, dim * dim), dtype=complex)
    for k in range(dim * dim):
        unit = np.zeros(dim * dim, dtype=complex)
        unit[k] = 1.0
        columns[:, k] = vec(fn(unvec(unit, dim)))
    return columns


def dissipator_superoperator(jump: Union[FockOperator, np.ndarray]) -> np.ndarray:
    ell = jump.matrix if isinstance(jump, FockOperator) else np.asarray(jump, dtype=complex)
    eye = np.eye(ell.shape[0])
    ldl = ell.conj().T @ ell
    return np.kron(ell.conj(), ell) - 0.5 * np.kron(eye, ldl) - 0.5 * np.kron(ldl.T, eye)


# ============================================================================
# Generators
# ============================================================================


class Generator(Protocol):
    """Linear generator d rho/dt = G(rho) on a Fock space."""

    space: FockSpace

    def apply(self, rho: np.ndarray) -> np.ndarray: ...

    def liouvillian(self) -> np.ndarray: ...

    def rate_bound(self) -> float: ...


class Jump(NamedTuple):
    rate: float
    operator: FockOperator


@dataclass(frozen=True)
class Pretuned:
    """Dissipative interaction of strength `rate` with phase `theta`."""

    rate: float
    theta: float


@dataclass(frozen=True)
class Directional:
    """Asymmetric directional family; sign=+1 is the upper sign (1 -> 2)."""

    eta: float = 1.0
    sign: int = 1


@dataclass(frozen=True)
class Conjugated:
    """Directional family with O1^dag and O2 in the jump."""

    eta: float = 1.0
    sign: int = 1


Variant = Union[Pretuned, Directional, Conjugated]


@dataclass(frozen=True, eq=False)
class NonreciprocalCoupling:
    """How a model was assembled from O1, O2: jump = c1 X1 + c2 X2 at rate `rate`."""

    o1: FockOperator
    o2: FockOperator
    lam: float
    rate: float
    c1: complex
    c2: complex
    conjugated: bool
    cut: Bipartition
    coherent: FockOperator

    @property
    def x1(self) -> FockOperator:
        return self.o1.adjoint() if self.conjugated else self.o1

    @property
    def x2(self) -> FockOperator:
        return self.o2 if self.conjugated else self.o2.adjoint()


@dataclass(frozen=True)
class EffectiveCouplings:
    """Interaction strengths seen by system 1 (lam12) and system 2 (lam21)."""

    lam12: complex
    lam21: complex

    @property
    def directional(self) -> bool:
        return abs(abs(self.lam12) - abs(self.lam21)) > HERMITIAN_TOL


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian plus (rate, jump) pairs."""

    space: FockSpace
    hamiltonian: FockOperator
    jumps: Tuple[Jump, ...] = ()
    coupling: Optional[NonreciprocalCoupling] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "jumps", tuple(Jump(float(r), op) for r, op in self.jumps))
        if self.hamiltonian.space != self.space:
            raise InvalidModelError("Hamiltonian lives on a different space")
        if not is_hermitian(self.hamiltonian):
            raise InvalidModelError(f"Hamiltonian {self.hamiltonian.label} is not Hermitian")
        for rate, op in self.jumps:
            if rate < 0 or not math.isfinite(rate):
                raise InvalidModelError(f"jump rate {rate} must be finite and non-negative")
            if op.space != self.space:
                raise InvalidModelError(f"jump {op.label} lives on a different space")

    @cached_property
    def _decay_terms(self) -> List[Tuple[float, np.ndarray, np.ndarray, np.ndarray]]:
        terms = []
        for rate, op in self.jumps:
            ell = op.matrix
            terms.append((rate, ell, ell.conj().T, ell.conj().T @ ell))
        return terms

    def apply(self, rho: np.ndarray) -> np.ndarray:
        h = self.hamiltonian.matrix
        out = -1j * (h @ rho - rho @ h)
        for rate, ell, ell_dag, ldl in self._decay_terms:
            out += rate * (ell @ rho @ ell_dag - 0.5 * (ldl @ rho + rho @ ldl))
        return out

    @cached_property
    def _liouvillian(self) -> np.ndarray:
        h = self.hamiltonian.matrix
        eye = np.eye(self.space.dimension)
        total = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
        for rate, op in self.jumps:
            total += rate * dissipator_superoperator(op)
        return total

    def liouvillian(self) -> np.ndarray:
        return self._liouvillian

    def rate_bound(self) -> float:
        bound = np.linalg.norm(self.hamiltonian.matrix, 2)
        for rate, op in self.jumps:
            bound += rate * np.linalg.norm(op.matrix, 2) ** 2
        return float(bound)

    def with_hamiltonian(self, extra: FockOperator) -> "LindbladModel":
        """Same model with `extra` added to the Hamiltonian."""
        return replace(self, hamiltonian=self.hamiltonian + extra)

    def with_jumps(self, *jumps: Tuple[float, FockOperator]) -> "LindbladModel":
        return replace(self, jumps=self.jumps + tuple(Jump(r, op) for r, op in jumps))


# ============================================================================
# Non-reciprocal recipe
# ============================================================================


def build_nonreciprocal(
    o1: FockOperator,
    o2: FockOperator,
    lam: complex,
    variant: Variant,
    cut: Optional[Bipartition] = None,
) -> LindbladModel:
    """
    Assemble the non-reciprocal master equation for coupling operators O1, O2.

    The Hamiltonian is (lam/2)(O1 O2 + h.c.). The jump operator depends on
    the variant: Pretuned(G, theta) gives (G, O1 + i e^{i theta} O2^dag),
    Directional(eta, s) gives (lam, eta^{1/2} O1 - s i eta^{-1/2} O2^dag),
    Conjugated(eta, s) gives (lam, eta^{1/2} O1^dag - s i eta^{-1/2} O2).
    The pretuned sign is +i so that theta = pi reproduces the upper-sign
    directional jump at eta = 1; the -i form is the same family at theta + pi.
    A complex lam is made real and positive by absorbing its phase into O1.

    Args:
        o1: Operator local to subsystem 1
        o2: Operator local to subsystem 2
        lam: Coherent interaction strength
        variant: Jump-operator family
        cut: Subsystem split (defaults to mode 1 versus the rest)

    Returns:
        LindbladModel carrying its coupling descriptor
    """
    if o1.space != o2.space:
        raise InvalidArgumentError("O1 and O2 live on different spaces")
    space = o1.space
    cut = cut or Bipartition.default(space)
    if not acts_only_on(o1, cut.first):
        raise InvalidCouplingError(f"O1 = {o1.label} acts outside subsystem {cut.first}")
    if not acts_only_on(o2, cut.second):
        raise InvalidCouplingError(f"O2 = {o2.label} acts outside subsystem {cut.second}")

    lam = complex(lam)
    magnitude = abs(lam)
    if magnitude > 0 and cmath.phase(lam) != 0.0:
        o1 = cmath.exp(1j * cmath.phase(lam)) * o1
    product = o1 * o2
    coherent = (magnitude / 2.0) * (product + product.adjoint())

    if isinstance(variant, Pretuned):
        if variant.rate < 0:
            raise InvalidArgumentError(f"dissipative rate must be non-negative, got {variant.rate}")
        rate, c1, c2, conjugated = variant.rate, 1.0 + 0j, 1j * cmath.exp(1j * variant.theta), False
    elif isinstance(variant, (Directional, Conjugated)):
        if variant.eta <= 0:
            raise InvalidArgumentError(f"eta must be positive, got {variant.eta}")
        if variant.sign not in (1, -1):
            raise InvalidArgumentError(f"sign must be +1 or -1, got {variant.sign}")
        rate = magnitude
        c1 = complex(math.sqrt(variant.eta))
        c2 = -variant.sign * 1j / math.sqrt(variant.eta)
        conjugated = isinstance(variant, Conjugated)
    else:
        raise InvalidArgumentError(f"unknown variant {variant!r}")

    x1 = o1.adjoint() if conjugated else o1
    x2 = o2 if conjugated else o2.adjoint()
    jump = (c1 * x1 + c2 * x2).relabel(f"{c1:.4g}*{x1.label} + {c2:.4g}*{x2.label}")
    descriptor = NonreciprocalCoupling(
        o1=o1,
        o2=o2,
        lam=magnitude,
        rate=float(rate),
        c1=c1,
        c2=c2,
        conjugated=conjugated,
        cut=cut,
        coherent=coherent,
    )
    return LindbladModel(space, coherent, (Jump(float(rate), jump),), descriptor)


def effective_couplings(lam: float, rate: float, theta: float) -> EffectiveCouplings:
    """lam12 = lam + G e^{-i theta}, lam21 = lam - G e^{-i theta}."""
    shift = rate * cmath.exp(-1j * theta)
    return EffectiveCouplings(lam12=lam + shift, lam21=lam - shift)


def interaction_strengths(model: LindbladModel) -> EffectiveCouplings:
    """Effective strengths entering the subsystem mean-value equations."""
    c = model.coupling
    if c is None:
        raise InvalidArgumentError("model was not built by build_nonreciprocal")
    if c.conjugated:
        cross = 1j * c.rate * np.conj(c.c1) * c.c2
        return EffectiveCouplings(lam12=c.lam - cross, lam21=c.lam + cross)
    cross = 1j * c.rate * c.c1 * np.conj(c.c2)
    return EffectiveCouplings(lam12=c.lam + cross, lam21=c.lam - cross)


def mean_value_eom_check(
    model: LindbladModel, observable: FockOperator, rho: Union[DensityMatrix, np.ndarray]
) -> float:
    """
    Compare d<observable>/dt from the full generator with its subsystem decomposition.

    For models built by build_nonreciprocal the decomposition is the local
    dissipator of the observable's subsystem plus the commutator with the
    effective interaction (lam~/2) O1 O2 + h.c.; extra Hamiltonian terms and
    extra jumps enter unchanged.
    """
    r = _matrix_of(rho)
    lhs = observable.expect(model.apply(r))

    def heisenberg(op: FockOperator) -> complex:
        return -1j * (observable * op - op * observable).expect(r)

    c = model.coupling
    if c is None:
        rhs = heisenberg(model.hamiltonian)
        rhs += sum(rate * observable.expect(dissipator(op, r)) for rate, op in model.jumps)
        return float(abs(lhs - rhs))

    strengths = interaction_strengths(model)
    if acts_only_on(observable, c.cut.first):
        lam_tilde = strengths.lam12
        local = abs(c.c1) ** 2 * c.rate * observable.expect(dissipator(c.x1, r))
    elif acts_only_on(observable, c.cut.second):
        lam_tilde = strengths.lam21
        local = abs(c.c2) ** 2 * c.rate * observable.expect(dissipator(c.x2, r))
    else:
        raise InvalidArgumentError(f"{observable.label} is not local to either subsystem")

    product = c.o1 * c.o2
    interaction = (lam_tilde / 2.0) * product + (np.conj(lam_tilde) / 2.0) * product.adjoint()
    rhs = local + heisenberg(interaction) + heisenberg(model.hamiltonian - c.coherent)
    rhs += sum(rate * observable.expect(dissipator(op, r)) for rate, op in model.jumps[1:])
    return float(abs(lhs - rhs))


def nonhermitian_part(model: LindbladModel) -> FockOperator:
    """H_NH = H - (i/2) sum_k G_k L_k^dag L_k."""
    h_nh = model.hamiltonian
    for rate, op in model.jumps:
        h_nh = h_nh - (0.5j * rate) * (op.adjoint() * op)
    return h_nh.relabel(f"H_NH[{model.hamiltonian.label}]")


def single_excitation_matrix(op: FockOperator) -> np.ndarray:
    """Matrix elements <1_j| op |1_k> between single-excitation states."""
    space = op.space
    kets = []
    for mode in space.modes:
        occupations = [0] * space.num_modes
        occupations[mode - 1] = 1
        kets.append(basis_state(space, occupations))
    basis = np.array(kets).T
    return basis.conj().T @ op.matrix @ basis


# ============================================================================
# Ring reduction and adiabatic elimination
# ============================================================================


def quadratic_hamiltonian(h: np.ndarray, space: FockSpace, label: str = "H") -> FockOperator:
    """Second-quantized sum_{jk} h_jk a_j^dag a_k."""
    h = np.asarray(h, dtype=complex)
    if h.shape != (space.num_modes, space.num_modes):
        raise InvalidArgumentError(f"matrix shape {h.shape} does not match {space.num_modes} modes")
    ladders = [mode_annihilation(space, m).matrix for m in space.modes]
    total = np.zeros((space.dimension, space.dimension), dtype=complex)
    for j, aj in enumerate(ladders):
        for k, ak in enumerate(ladders):
            if h[j, k] != 0:
                total += h[j, k] * (aj.conj().T @ ak)
    return FockOperator(space, total, label)


def ring_master_equation(t: float, flux: float, kappa_tilde: float, space: FockSpace) -> LindbladModel:
    """Two-mode ring reduction: H = -t(a2^dag a1 + h.c.), jump (k~, a2 + e^{i flux} a1)."""
    if space.num_modes != 2:
        raise InvalidArgumentError(f"ring master equation needs 2 modes, got {space.num_modes}")
    if kappa_tilde < 0:
        raise InvalidArgumentError(f"kappa_tilde must be non-negative, got {kappa_tilde}")
    a1, a2 = mode_annihilation(space, 1), mode_annihilation(space, 2)
    hop = a2.adjoint() * a1
    hamiltonian = (-t * (hop + hop.adjoint())).relabel("H_ring")
    jump = (a2 + cmath.exp(1j * flux) * a1).relabel(f"a2 + e^(i{flux:.4g})a1")
    return LindbladModel(space, hamiltonian, (Jump(kappa_tilde, jump),))


def full_ring_model(
    t: float,
    t_prime: float,
    phi: float,
    kappa1: float,
    kappa2: float,
    kappa3: float,
    space: FockSpace,
) -> LindbladModel:
    """Three damped modes on the ring with bond phase phi and site-3 bonds t_prime."""
    if space.num_modes != 3:
        raise InvalidArgumentError(f"full ring model needs 3 modes, got {space.num_modes}")
    h = lattice.build_hamiltonian(lattice.ring_model(t, 3.0 * phi, t_prime=t_prime))
    hamiltonian = quadratic_hamiltonian(h, space, "H_ring3")
    jumps = tuple(
        Jump(rate, mode_annihilation(space, m))
        for m, rate in zip(space.modes, (kappa1, kappa2, kappa3))
    )
    return LindbladModel(space, hamiltonian, jumps)


@dataclass(frozen=True, eq=False)
class AdiabaticElimination:
    """Eliminated two-mode model; <a1> = e^{i gauge_phase} <b1> in the model's gauge."""

    kappa_tilde: float
    t12: complex
    t21: complex
    model: LindbladModel
    gauge_phase: float
    validity_ratio: float


def adiabatic_eliminate(
    t: float,
    t_prime: float,
    phi: float,
    kappa1: float,
    kappa2: float,
    kappa3: float,
    space: Optional[FockSpace] = None,
) -> AdiabaticElimination:
    """
    Eliminate the strongly damped mode 3 of the three-mode ring.

    Args:
        t: Direct 1-2 hopping
        t_prime: Hopping magnitude on the bonds touching mode 3
        phi: Phase per bond
        kappa1: Decay of mode 1
        kappa2: Decay of mode 2
        kappa3: Decay of the eliminated mode
        space: Two-mode space for the returned model (cutoff 1 by default)

    Returns:
        AdiabaticElimination with k~, t~12, t~21 and the ring master equation
    """
    if kappa3 <= 0:
        raise InvalidArgumentError(f"kappa3 must be positive, got {kappa3}")
    scale = max(t, t_prime, kappa1, kappa2)
    ratio = kappa3 / scale if scale > 0 else math.inf
    if ratio <= 10:
        logger.warning(f"Adiabatic elimination outside validity: kappa3/max rate = {ratio:.3g}")
    elif ratio < 100:
        logger.warning(f"Adiabatic elimination marginal: kappa3/max rate = {ratio:.3g} < 100")

    induced = 2j * t_prime**2 / kappa3
    kappa_tilde = 4.0 * t_prime**2 / kappa3
    t12 = cmath.exp(1j * phi) * t + cmath.exp(-2j * phi) * induced
    t21 = cmath.exp(-1j * phi) * t + cmath.exp(2j * phi) * induced
    if abs(t21) < 1e-12 * max(t, 1.0):
        logger.warning(
            f"Directional point reached: |t12| = {abs(t12):.6g}, arg t12 = {cmath.phase(t12):.6g} rad "
            f"(closed-form quote gives pi/4)"
        )

    space = space or FockSpace(2, 1)
    model = ring_master_equation(t, 3.0 * phi, kappa_tilde, space)
    model = model.with_jumps((kappa1, mode_annihilation(space, 1)), (kappa2, mode_annihilation(space, 2)))
    logger.info(f"Eliminated mode 3: kappa~={kappa_tilde:.6g}, |t12|={abs(t12):.6g}, |t21|={abs(t21):.3e}")
    return AdiabaticElimination(kappa_tilde, t12, t21, model, phi, ratio)


@dataclass(frozen=True)
class AdiabaticComparison:
    """Mean amplitudes of the full and eliminated models on a shared time grid."""

    kappa3: float
    times: np.ndarray
    full: np.ndarray  # shape (n, 2): <a1>, <a2>
    eliminated: np.ndarray
    relative_error: float


def compare_adiabatic(
    t: float,
    kappa3: float,
    phi: float = math.pi / 6,
    kappa1: float = 0.0,
    kappa2: float = 0.0,
    t_prime: Optional[float] = None,
    duration: float = 5.0,
    samples: int = 500,
) -> AdiabaticComparison:
    """
    Integrate the full three-mode ring and its eliminated two-mode model.

    Mode 2 starts in (|0> + |1>)/sqrt 2 with the other modes empty; at
    cutoff 1 the mean amplitudes follow the linear drift exactly. The
    default t_prime satisfies the matching condition 2 t'^2 / kappa3 = t.
    The error is max_t |<a>_full - <a>_elim| over max_t |<a>_full| with
    |.| the Euclidean norm over the two modes.
    """
    t_prime = math.sqrt(t * kappa3 / 2.0) if t_prime is None else t_prime
    elimination = adiabatic_eliminate(t, t_prime, phi, kappa1, kappa2, kappa3)
    full_space = FockSpace(3, 1)
    full = full_ring_model(t, t_prime, phi, kappa1, kappa2, kappa3, full_space)

    t_final = duration / t
    dt = t_final / samples
    psi_full = (basis_state(full_space, [0, 0, 0]) + basis_state(full_space, [0, 1, 0])) / math.sqrt(2)
    small = elimination.model.space
    psi_small = (basis_state(small, [0, 0]) + basis_state(small, [0, 1])) / math.sqrt(2)

    run_full = evolve(full, DensityMatrix.pure(full_space, psi_full), t_final, dt, method="expm")
    run_small = evolve(elimination.model, DensityMatrix.pure(small, psi_small), t_final, dt, method="expm")

    means_full = np.column_stack(
        [run_full.expect(mode_annihilation(full_space, m)) for m in (1, 2)]
    )
    means_small = np.column_stack(
        [run_small.expect(mode_annihilation(small, m)) for m in (1, 2)]
    )
    means_small[:, 0] *= cmath.exp(1j * elimination.gauge_phase)

    deviation = np.linalg.norm(means_full - means_small, axis=1).max()
    error = float(deviation / np.linalg.norm(means_full, axis=1).max())
    logger.info(f"Adiabatic comparison at kappa3={kappa3:g}: relative error {error:.4e}")
    return AdiabaticComparison(kappa3, run_full.times, means_full, means_small, error)


# ============================================================================
# Integration and steady states
# ============================================================================


@dataclass(frozen=True, eq=False)
class Evolution:
    """Sampled density matrices of one integration run."""

    space: FockSpace
    times: np.ndarray
    states: np.ndarray  # shape (n, d, d)

    def expect(self, op: FockOperator) -> np.ndarray:
        return np.einsum("ij,nji->n", op.matrix, self.states)

    def state(self, index: int) -> DensityMatrix:
        return DensityMatrix(self.space, self.states[index])

    @property
    def final(self) -> DensityMatrix:
        return self.state(-1)


def evolve(
    generator: Generator,
    rho0: DensityMatrix,
    t_final: float,
    dt: float,
    method: str = "rk4",
    store_every: int = 1,
) -> Evolution:
    """
    Integrate d rho/dt = G(rho) from rho0 up to t_final.

    `rk4` is the classical fourth-order step with symmetrization after every
    step; `expm` propagates with exp(L dt). The step is shrunk so that an
    integer number of steps reaches t_final.

    Args:
        generator: LindbladModel or any Generator
        rho0: Initial state
        t_final: End time
        dt: Requested step
        method: "rk4" or "expm"
        store_every: Keep every n-th state (the final state is always kept)

    Returns:
        Evolution with the sampled times and states
    """
    if dt <= 0 or t_final < 0:
        raise InvalidArgumentError(f"need dt > 0 and t_final >= 0, got dt={dt}, t_final={t_final}")
    if rho0.space != generator.space:
        raise InvalidArgumentError("initial state lives on a different space")
    rho0.check_positive()
    steps = max(0, math.ceil(t_final / dt - 1e-9))
    h = t_final / steps if steps else dt
    d = generator.space.dimension

    if method == "rk4":
        product = h * generator.rate_bound()
        if product >= RK4_GUARD:
            raise StepSizeError(
                f"dt*(|H| + sum G|L|^2) = {product:.3g} must stay below {RK4_GUARD}",
                bound="dt*(|H|+sum G|L|^2) < 0.1",
                value=product,
            )

        def step(rho: np.ndarray) -> np.ndarray:
            k1 = generator.apply(rho)
            k2 = generator.apply(rho + 0.5 * h * k1)
            k3 = generator.apply(rho + 0.5 * h * k2)
            k4 = generator.apply(rho + h * k3)
            new = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            return 0.5 * (new + new.conj().T)

    elif method == "expm":
        propagator = expm(generator.liouvillian() * h)

        def step(rho: np.ndarray) -> np.ndarray:
            new = unvec(propagator @ vec(rho), d)
            return 0.5 * (new + new.conj().T)

    else:
        raise InvalidArgumentError(f"unknown integration method '{method}'")

    rho = rho0.matrix.copy()
    times, states = [0.0], [rho.copy()]
    for n in range(1, steps + 1):
        rho = step(rho)
        drift = abs(np.trace(rho) - 1.0)
        if drift > TRACE_DRIFT_TOL:
            raise IntegrationError(f"trace drifted by {drift:.3e} at step {n}")
        if n % store_every == 0 or n == steps:
            times.append(n * h)
            states.append(rho.copy())
    logger.debug(f"Integrated {steps} {method} steps of {h:.4g} on dimension {d}")
    return Evolution(generator.space, np.array(times), np.array(states))


def steady_state(generator: Generator) -> DensityMatrix:
    """
    Unique steady state from the Liouvillian null space.

    One row of L is replaced by the trace functional and the bordered system
    is solved by LU factorization. Uniqueness is checked with the
    second-smallest singular value of L on small problems. Larger ones use
    the LAPACK condition estimate and the smallest singular value of the
    bordered matrix, which vanishes exactly when the null space of L is
    degenerate.
    """
    space = generator.space
    d = space.dimension
    lv = generator.liouvillian()
    n = lv.shape[0]

    if n <= SVD_LIMIT:
        singular = np.linalg.svd(lv, compute_uv=False)
        if singular[-2] <= SINGULAR_VALUE_GAP:
            raise NonUniqueSteadyStateError(
                f"second-smallest singular value {singular[-2]:.3e} <= {SINGULAR_VALUE_GAP}"
            )

    bordered = lv.copy()
    bordered[0, :] = vec(np.eye(d))
    rhs = np.zeros(n, dtype=complex)
    rhs[0] = 1.0
    lu, piv = lu_factor(bordered)
    rcond, _ = zgecon(lu, np.linalg.norm(bordered, 1), norm="1")
    if rcond < RCOND_FLOOR:
        raise NonUniqueSteadyStateError(f"bordered Liouvillian has rcond {rcond:.3e}")
    if n > SVD_LIMIT:
        smallest = _smallest_singular_value(lu, piv, n)
        if smallest <= SINGULAR_VALUE_GAP:
            raise NonUniqueSteadyStateError(
                f"bordered Liouvillian has smallest singular value {smallest:.3e} <= {SINGULAR_VALUE_GAP}"
            )

    rho = unvec(lu_solve((lu, piv), rhs), d)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    residual = float(np.linalg.norm(lv @ vec(rho)))
    if residual > RESIDUAL_TOL:
        raise NumericalSingularityError(
            f"steady-state residual {residual:.3e} exceeds {RESIDUAL_TOL}",
            condition_number=1.0 / rcond,
        )
    logger.info(f"Steady state on dimension {d}: residual {residual:.2e}, rcond {rcond:.2e}")
    return DensityMatrix(space, rho).check_positive()


def _smallest_singular_value(lu: np.ndarray, piv: np.ndarray, n: int) -> float:
    """1 / ||B^-1||_2 from the LU factors of B, by Lanczos on the inverse."""
    inverse = LinearOperator(
        (n, n),
        matvec=lambda x: lu_solve((lu, piv), x),
        rmatvec=lambda x: lu_solve((lu, piv), x, trans=2),
        dtype=complex,
    )
    start = np.full(n, 1.0 / math.sqrt(n), dtype=complex)
    largest = svds(inverse, k=1, which="LM", v0=start, return_singular_vectors=False)
    return float(1.0 / largest[0])


# ============================================================================
# JSON model description
# ============================================================================


class JumpSpec(BaseModel):
    """One dissipative channel."""

    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    rate: float = Field(..., ge=0, description="Rate G_k")
    operator: str = Field(..., description="Jump operator expression")


class ModelSpec(BaseModel):
    """Lindblad model described by operator expressions."""

    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    modes: int = Field(..., ge=1, le=3, description="Number of modes")
    cutoff: Union[int, List[int]] = Field(..., description="Per-mode maximum occupation")
    hamiltonian: str = Field("0", description="Hamiltonian expression")
    jumps: List[JumpSpec] = Field(default_factory=list, description="Dissipative channels")


def lindblad_model_from_spec(spec: ModelSpec) -> LindbladModel:
    space = FockSpace(spec.modes, spec.cutoff if isinstance(spec.cutoff, int) else tuple(spec.cutoff))
    hamiltonian = parse_operator(spec.hamiltonian, space)
    jumps = tuple(Jump(j.rate, parse_operator(j.operator, space)) for j in spec.jumps)
    return LindbladModel(space, hamiltonian, jumps)


def zero_model(space: FockSpace) -> LindbladModel:
    return LindbladModel(space, 0.0 * identity(space))
