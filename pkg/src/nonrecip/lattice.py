"""Tight-binding networks with complex hoppings, gauge transforms and loop fluxes."""

import json
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import InvalidArgumentError, InvalidModelError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


def wrap_phase(angle: float) -> float:
    """Map an angle onto the canonical branch (-pi, pi]."""
    wrapped = math.remainder(angle, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


# ============================================================================
# Models
# ============================================================================


class Hopping(BaseModel):
    """Single bond amplitude t_{jj'} moving an excitation from site j' to site j."""

    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid", allow_inf_nan=False)

    from_site: int = Field(..., alias="from", description="Source site j' (1-based)")
    to_site: int = Field(..., alias="to", description="Destination site j (1-based)")
    re: float = Field(0.0, description="Real part of t_{jj'}")
    im: float = Field(0.0, description="Imaginary part of t_{jj'}")

    @classmethod
    def of(cls, to_site: int, from_site: int, amplitude: complex) -> "Hopping":
        amplitude = complex(amplitude)
        return cls(to=to_site, **{"from": from_site}, re=amplitude.real, im=amplitude.imag)

    @property
    def amplitude(self) -> complex:
        return complex(self.re, self.im)

    def canonical(self) -> "Hopping":
        """Same bond stored with to_site > from_site."""
        if self.to_site > self.from_site:
            return self
        return Hopping.of(self.from_site, self.to_site, self.amplitude.conjugate())


class LatticeModel(BaseModel):
    """Photon-number conserving network: on-site frequencies, bonds and port rates."""

    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid", allow_inf_nan=False)

    num_sites: int = Field(..., alias="sites", description="Number of sites N")
    onsite_freq: Tuple[float, ...] = Field(..., alias="omega", description="On-site frequencies")
    hoppings: Tuple[Hopping, ...] = Field(default=(), description="Bonds, one per pair")
    port_rates: Tuple[float, ...] = Field(..., alias="kappa", description="Port couplings")

    @field_validator("hoppings", mode="after")
    @classmethod
    def _canonicalize(cls, value: Tuple[Hopping, ...]) -> Tuple[Hopping, ...]:
        return tuple(h.canonical() if h.to_site != h.from_site else h for h in value)

    @model_validator(mode="after")
    def _check_structure(self) -> "LatticeModel":
        check_model(self)
        return self

    # ------------------------------------------------------------------
    # JSON document
    # ------------------------------------------------------------------

    @classmethod
    def from_json(cls, text: str) -> "LatticeModel":
        """Parse the lattice JSON document."""
        try:
            return cls.model_validate_json(text)
        except ValidationError as e:
            raise InvalidModelError(f"Invalid lattice document: {e.errors()[0]['msg']}")

    def to_json(self) -> str:
        document = {
            "sites": self.num_sites,
            "omega": list(self.onsite_freq),
            "hoppings": [
                {"from": h.from_site, "to": h.to_site, "re": h.re, "im": h.im}
                for h in self.hoppings
            ],
            "kappa": list(self.port_rates),
        }
        return json.dumps(document)

    def amplitudes(self) -> Dict[Tuple[int, int], complex]:
        """Map (j, j') -> t_{jj'} for both orientations of every bond."""
        table: Dict[Tuple[int, int], complex] = {}
        for h in self.hoppings:
            table[(h.to_site, h.from_site)] = h.amplitude
            table[(h.from_site, h.to_site)] = h.amplitude.conjugate()
        return table


def check_model(model: LatticeModel) -> None:
    """Raise InvalidModelError unless the structural invariants hold."""
    n = model.num_sites
    if n < 1:
        raise InvalidModelError(f"num_sites must be positive, got {n}")
    if len(model.onsite_freq) != n:
        raise InvalidModelError(f"omega has {len(model.onsite_freq)} entries for {n} sites")
    if len(model.port_rates) != n:
        raise InvalidModelError(f"kappa has {len(model.port_rates)} entries for {n} sites")
    if any(k < 0 or not math.isfinite(k) for k in model.port_rates):
        raise InvalidModelError(f"port rates must be finite and non-negative: {model.port_rates}")
    seen = set()
    for h in model.hoppings:
        for site in (h.to_site, h.from_site):
            if not 1 <= site <= n:
                raise InvalidModelError(f"site index {site} outside [1, {n}]")
        if h.to_site == h.from_site:
            raise InvalidModelError(f"self-hopping on site {h.to_site}")
        pair = (h.to_site, h.from_site)
        if pair in seen:
            raise InvalidModelError(f"bond {pair} listed twice")
        seen.add(pair)


class GaugeTransform(BaseModel):
    """Per-site phase shifts of the annihilation operators."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    phases: Tuple[float, ...]

    @field_validator("phases", mode="after")
    @classmethod
    def _reduce(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        return tuple(math.fmod(theta, TWO_PI) for theta in value)


@dataclass(frozen=True)
class RingSpectrum:
    """Plane-wave spectrum of the three-site ring."""

    labels: Tuple[int, ...]
    wavevectors: np.ndarray
    energies: np.ndarray
    flux: float
    eigenvectors: np.ndarray  # column m is (1/sqrt 3) e^{i k_m j}


# ============================================================================
# Operations
# ============================================================================


def build_hamiltonian(model: LatticeModel) -> np.ndarray:
    """
    Build the Hermitian hopping matrix of a lattice model.

    Diagonal entries are the on-site frequencies, entry (j, j') is -t_{jj'}
    and entry (j', j) its conjugate.

    Args:
        model: Lattice model

    Returns:
        Complex N x N Hermitian matrix
    """
    check_model(model)
    n = model.num_sites
    h = np.zeros((n, n), dtype=complex)
    h[np.diag_indices(n)] = model.onsite_freq
    for bond in model.hoppings:
        j, jp = bond.to_site - 1, bond.from_site - 1
        h[j, jp] = -bond.amplitude
        h[jp, j] = np.conj(h[j, jp])
    return h


def apply_gauge(model: LatticeModel, gauge: GaugeTransform) -> LatticeModel:
    """Return the model with t_{jj'} -> t_{jj'} exp(i(theta_j' - theta_j))."""
    if len(gauge.phases) != model.num_sites:
        raise InvalidArgumentError(
            f"gauge has {len(gauge.phases)} phases for {model.num_sites} sites"
        )
    theta = gauge.phases
    bonds = [
        Hopping.of(
            h.to_site,
            h.from_site,
            h.amplitude * np.exp(1j * (theta[h.from_site - 1] - theta[h.to_site - 1])),
        )
        for h in model.hoppings
    ]
    return model.model_copy(update={"hoppings": tuple(bonds)})


def cycle_hoppings(model: LatticeModel, cycle: Sequence[int]) -> List[complex]:
    """Amplitudes t_{c0 c1}, t_{c1 c2}, ... along a closed walk."""
    walk = list(cycle)
    if len(walk) < 2:
        raise InvalidArgumentError(f"cycle needs at least two sites, got {walk}")
    if walk[0] != walk[-1]:
        walk.append(walk[0])
    table = model.amplitudes()
    amplitudes = []
    for a, b in zip(walk[:-1], walk[1:]):
        if (a, b) not in table:
            raise InvalidArgumentError(f"cycle uses missing bond {a}-{b}")
        amplitudes.append(table[(a, b)])
    return amplitudes


def loop_flux(model: LatticeModel, cycle: Sequence[int]) -> float:
    """Gauge-invariant phase arg(t_{c0 c1} t_{c1 c2} ...) in (-pi, pi]."""
    product = complex(np.prod(cycle_hoppings(model, cycle)))
    if product == 0:
        raise InvalidArgumentError(f"cycle {list(cycle)} crosses a zero bond")
    return wrap_phase(math.atan2(product.imag, product.real))


def ring_model(
    t: float,
    flux: float,
    kappa: float | Sequence[float] = 0.0,
    onsite: float | Sequence[float] = 0.0,
    gauge: Literal["uniform", "bond"] = "uniform",
    t_prime: Optional[float] = None,
) -> LatticeModel:
    """
    Three-site ring threaded by a synthetic flux.

    In the uniform gauge every bond carries phase flux/3 so that
    H_{j,j+1} = -t e^{i flux/3}; the bond gauge puts the whole flux on
    bond 3-1. t_prime sets the magnitude of the two bonds touching site 3.
    """
    tp = t if t_prime is None else t_prime
    kappas = _per_site(kappa, 3)
    omegas = _per_site(onsite, 3)
    if gauge == "uniform":
        phi = flux / 3.0
        bonds = [
            Hopping.of(2, 1, t * np.exp(-1j * phi)),
            Hopping.of(3, 2, tp * np.exp(-1j * phi)),
            Hopping.of(3, 1, tp * np.exp(1j * phi)),
        ]
    elif gauge == "bond":
        bonds = [
            Hopping.of(2, 1, t),
            Hopping.of(3, 2, tp),
            Hopping.of(3, 1, tp * np.exp(1j * flux)),
        ]
    else:
        raise InvalidArgumentError(f"unknown gauge '{gauge}'")
    return LatticeModel(sites=3, omega=omegas, hoppings=bonds, kappa=kappas)


def chain_ring(num_sites: int, t: complex, kappa: float = 0.0) -> LatticeModel:
    """Periodic N-site ring with identical bonds t_{j+1,j} = t."""
    bonds = [Hopping.of(j + 1, j, t) for j in range(1, num_sites)]
    bonds.append(Hopping.of(num_sites, 1, np.conj(t)))
    return LatticeModel(
        sites=num_sites, omega=[0.0] * num_sites, hoppings=bonds, kappa=[kappa] * num_sites
    )


def ring_spectrum(t: float, flux: float) -> RingSpectrum:
    """Energies Omega_m = -2t cos(k_m + flux/3) and plane-wave eigenvectors."""
    if t <= 0:
        raise InvalidArgumentError(f"t must be positive, got {t}")
    labels = (-1, 0, 1)
    k = np.array([TWO_PI * m / 3.0 for m in labels])
    energies = -2.0 * t * np.cos(k + flux / 3.0)
    sites = np.arange(1, 4)
    vectors = np.exp(1j * np.outer(sites, k)) / math.sqrt(3.0)
    return RingSpectrum(
        labels=labels, wavevectors=k, energies=energies, flux=flux, eigenvectors=vectors
    )


def band_curvature(t: float, lattice_const: float, num_sites: int = 256) -> float:
    """
    Effective mass from a quadratic fit to the ring dispersion near its minimum.

    Band energies are evaluated as plane-wave expectation values of the
    numerically built ring Hamiltonian at the five lattice momenta closest to
    the band minimum.

    Args:
        t: Hopping amplitude
        lattice_const: Lattice spacing a
        num_sites: Ring length (at least 64)

    Returns:
        Effective mass m* (hbar = 1)
    """
    if t <= 0 or lattice_const <= 0:
        raise InvalidArgumentError(f"t and lattice_const must be positive, got {t}, {lattice_const}")
    if num_sites < 64:
        raise InvalidArgumentError(f"band_curvature needs at least 64 sites, got {num_sites}")

    h = build_hamiltonian(chain_ring(num_sites, t))
    positions = lattice_const * np.arange(1, num_sites + 1)
    labels = np.arange(-(num_sites // 2) + 1, num_sites // 2 + 1)
    momenta = TWO_PI * labels / (num_sites * lattice_const)
    waves = np.exp(1j * np.outer(positions, momenta)) / math.sqrt(num_sites)
    energies = np.real(np.einsum("jm,jk,km->m", waves.conj(), h, waves))

    centre = int(np.argmin(energies))
    window = [(centre + d) % num_sites for d in range(-2, 3)]
    offsets = momenta[window] - momenta[centre]
    curvature = np.polyfit(offsets, energies[window], 2)[0]
    mass = 1.0 / (2.0 * curvature)
    logger.debug(f"Band fit on {num_sites} sites: curvature={curvature:.6g}, m*={mass:.6g}")
    return float(mass)


def _per_site(value: float | Iterable[float], n: int) -> List[float]:
    if isinstance(value, (int, float)):
        return [float(value)] * n
    values = [float(v) for v in value]
    if len(values) != n:
        raise InvalidArgumentError(f"expected {n} per-site values, got {len(values)}")
    return values
