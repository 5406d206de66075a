"""nonrecip - non-reciprocal photonic networks and open quantum systems."""

__version__ = "0.1.0"
__author__ = "nonrecip developers"

__all__ = [
    "lattice",
    "drives",
    "scattering",
    "fock",
    "lindblad",
    "feedforward",
    "entanglement",
    "reports",
    "cli",
]
