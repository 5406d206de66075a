"""Shared test fixtures for nonrecip tests."""

import math

import numpy as np
import pytest

from src.nonrecip.config import settings
from src.nonrecip.fock import FockSpace, mode_annihilation
from src.nonrecip.lattice import ring_model


@pytest.fixture
def rng():
    """Provide a seeded generator for random test data."""
    return np.random.default_rng(20240611)


@pytest.fixture
def qubit_pair():
    """Two modes truncated at one excitation each."""
    return FockSpace(2, 1)


@pytest.fixture
def two_modes():
    """Two modes with cutoff 2."""
    return FockSpace(2, 2)


@pytest.fixture
def ladders(two_modes):
    """Annihilation operators a1, a2 on the cutoff-2 pair."""
    return mode_annihilation(two_modes, 1), mode_annihilation(two_modes, 2)


@pytest.fixture
def tuned_ring():
    """Three-site circulator at t=1, flux=pi/2, kappa=2."""
    return ring_model(1.0, math.pi / 2, 2.0)


@pytest.fixture
def output_dir(tmp_path):
    """Empty directory for report files."""
    out = tmp_path / "out"
    return out


@pytest.fixture
def single_thread(monkeypatch):
    """Force single-threaded pools."""
    monkeypatch.setattr(settings, "threads", 1)
    return settings


def random_hermitian(rng, dim, scale=1.0):
    """Hermitian matrix with Gaussian entries."""
    raw = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (raw + raw.conj().T)


def random_density(rng, dim):
    """Full-rank random density matrix."""
    raw = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = raw @ raw.conj().T
    return rho / np.trace(rho).real


def random_unitary(rng, dim):
    """Haar-like unitary from a QR decomposition."""
    raw = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(raw)
    return q * (np.diag(r) / np.abs(np.diag(r)))
