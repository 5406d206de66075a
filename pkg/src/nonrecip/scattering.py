"""Retarded Green's functions and scattering matrices of port-coupled networks."""

import cmath
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .config import settings
from .errors import InvalidArgumentError, NoSolutionError, NumericalSingularityError
from .lattice import LatticeModel, build_hamiltonian, ring_model

logger = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class NonHermitianMatrix:
    """H_eff = H - i diag(kappa/2)."""

    hermitian: np.ndarray
    rates: np.ndarray

    @classmethod
    def from_model(cls, model: LatticeModel) -> "NonHermitianMatrix":
        return cls(build_hamiltonian(model), np.asarray(model.port_rates, dtype=float))

    @property
    def dimension(self) -> int:
        return self.hermitian.shape[0]

    @property
    def anti_hermitian(self) -> np.ndarray:
        return -0.5j * np.diag(self.rates)

    @property
    def matrix(self) -> np.ndarray:
        return self.hermitian + self.anti_hermitian


@dataclass(frozen=True, eq=False)
class ScatteringResult:
    frequency: float
    s: np.ndarray
    greens: np.ndarray


@dataclass(frozen=True)
class Tuning:
    flux: float
    kappa: float


@dataclass(frozen=True)
class TrajectoryAmplitudes:
    """Lowest-order hopping paths from site 1 to 2 (q) and back (q_rev)."""

    q1: complex
    q2: complex
    q1_rev: complex
    q2_rev: complex


@dataclass(frozen=True)
class AllOrdersDecomposition:
    q1_tot: complex
    q2_tot: complex
    z22: complex
    residual: float


@dataclass(frozen=True, eq=False)
class CirculatorReport:
    """Tuned three-port ring at zero frequency."""

    t: float
    flux: float
    kappa: float
    s: np.ndarray
    z: complex
    s21_abs: float
    reflection_max: float
    circulant_deviation: float

    @property
    def z_cubed(self) -> complex:
        return self.z**3


# ============================================================================
# Resolvents
# ============================================================================


def greens_function(model: LatticeModel, omega: float) -> np.ndarray:
    """
    Retarded Green's function [omega - H_eff]^{-1}.

    Args:
        model: Lattice model with port rates
        omega: Drive frequency

    Returns:
        Complex N x N matrix G^R(omega)
    """
    heff = NonHermitianMatrix.from_model(model).matrix
    resolvent = omega * np.eye(model.num_sites) - heff
    condition = float(np.linalg.cond(resolvent))
    if not math.isfinite(condition) or condition > CONDITION_LIMIT:
        raise NumericalSingularityError(
            f"resolvent at omega={omega} is singular (condition number {condition:.3e})",
            condition_number=condition,
        )
    return lu_solve(lu_factor(resolvent), np.eye(model.num_sites, dtype=complex))


def smatrix(model: LatticeModel, omega: float) -> ScatteringResult:
    """s = I - i K^{1/2} G^R K^{1/2} with K = diag(kappa)."""
    greens = greens_function(model, omega)
    root = np.diag(np.sqrt(np.asarray(model.port_rates, dtype=float)))
    s = np.eye(model.num_sites) - 1j * root @ greens @ root
    return ScatteringResult(frequency=float(omega), s=s, greens=greens)


def pole_sum_greens(t: float, flux: float, kappa: float, omega: float) -> np.ndarray:
    """Eigenmode expansion of G^R for the uniform three-site ring."""
    k = 2.0 * math.pi * np.array([-1, 0, 1]) / 3.0
    energies = -2.0 * t * np.cos(k + flux / 3.0)
    sites = np.arange(1, 4)
    separation = sites[:, None] - sites[None, :]
    weights = 1.0 / (omega - energies + 0.5j * kappa)
    phases = np.exp(1j * separation[:, :, None] * k[None, None, :])
    return (phases * weights).sum(axis=2) / 3.0


def sweep(model: LatticeModel, start: float, stop: float, count: int) -> List[ScatteringResult]:
    """s-matrices on the half-open grid start + (stop - start) * i / count."""
    if count < 0:
        raise InvalidArgumentError(f"count must be non-negative, got {count}")
    grid = np.linspace(start, stop, count, endpoint=False)
    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        results = list(pool.map(lambda w: smatrix(model, float(w)), grid))
    logger.info(f"Swept {count} frequencies in [{start}, {stop}) on {settings.threads} threads")
    return results


# ============================================================================
# Directionality
# ============================================================================


def directionality_tuning(t: float, omega: float, direction: int = 1) -> Tuning:
    """
    Flux and port rate that cancel G^R[2,1] at frequency omega.

    Solves e^{i flux} = (omega + i kappa/2)/t with flux in (0, pi);
    direction=-1 returns the mirrored flux that blocks the reverse path.
    """
    if t <= 0:
        raise InvalidArgumentError(f"t must be positive, got {t}")
    if direction not in (1, -1):
        raise InvalidArgumentError(f"direction must be +1 or -1, got {direction}")
    if abs(omega) >= t:
        raise NoSolutionError(f"no directional point for |omega| = {abs(omega)} >= t = {t}")
    kappa = 2.0 * math.sqrt(t * t - omega * omega)
    flux = math.atan2(kappa / 2.0, omega)
    return Tuning(flux=direction * flux, kappa=kappa)


def trajectory_amplitudes(t: float, phi: float, kappa: float, omega: float) -> TrajectoryAmplitudes:
    """One- and two-hop amplitudes between sites 1 and 2 with bare propagators."""
    if kappa < 0:
        raise InvalidArgumentError(f"kappa must be non-negative, got {kappa}")
    g0 = 1.0 / (omega + 0.5j * kappa)

    def paths(phase: float) -> tuple:
        direct = g0 * (-t * cmath.exp(-1j * phase)) * g0
        detour = g0 * (-t * cmath.exp(1j * phase)) * g0 * (-t * cmath.exp(1j * phase)) * g0
        return direct, detour

    q1, q2 = paths(phi)
    q1_rev, q2_rev = paths(-phi)
    return TrajectoryAmplitudes(q1, q2, q1_rev, q2_rev)


def all_orders_decomposition(model: LatticeModel, omega: float) -> AllOrdersDecomposition:
    """
    Split G^R[2,1] into the direct and detour path families to all orders.

    Z22 = (1 - [H G0]_23 [H G0]_32)^{-1} resums excursions between sites 2
    and 3. Each family ends with the bare propagator of site 2 and starts
    with G^R[1,1].
    """
    if model.num_sites != 3:
        raise InvalidArgumentError(f"decomposition needs a 3-site ring, got {model.num_sites} sites")
    bonds = {frozenset((h.to_site, h.from_site)) for h in model.hoppings if h.amplitude != 0}
    if len(bonds) != 3:
        raise InvalidArgumentError("decomposition needs all three ring bonds")

    h = build_hamiltonian(model)
    rates = np.asarray(model.port_rates)
    g0 = 1.0 / (omega - np.real(np.diag(h)) + 0.5j * rates)
    greens = greens_function(model, omega)

    z22 = 1.0 / (1.0 - h[1, 2] * g0[2] * h[2, 1] * g0[1])
    q1_tot = g0[1] * z22 * h[1, 0] * greens[0, 0]
    q2_tot = g0[1] * z22 * h[1, 2] * g0[2] * h[2, 0] * greens[0, 0]
    residual = float(abs(q1_tot + q2_tot - greens[1, 0]))
    return AllOrdersDecomposition(complex(q1_tot), complex(q2_tot), complex(z22), residual)


def circulator_check(t: float = 1.0) -> CirculatorReport:
    """Tuned ring at omega=0: circulation 1->3->2->1 with z = s12 = s23 = s31."""
    tuning = directionality_tuning(t, 0.0)
    model = ring_model(t, tuning.flux, tuning.kappa)
    s = smatrix(model, 0.0).s
    z = complex(s[0, 1])
    pattern = np.roll(np.eye(3), 1, axis=1) * z
    report = CirculatorReport(
        t=t,
        flux=tuning.flux,
        kappa=tuning.kappa,
        s=s,
        z=z,
        s21_abs=float(abs(s[1, 0])),
        reflection_max=float(np.max(np.abs(np.diag(s)))),
        circulant_deviation=float(np.max(np.abs(s - pattern))),
    )
    logger.info(
        f"Circulator at t={t}: |s21|={report.s21_abs:.2e}, z={z:.6f}, z^3={report.z_cubed:.6f}"
    )
    return report
