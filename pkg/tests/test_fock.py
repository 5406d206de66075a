"""Tests for truncated Fock spaces and operator algebra."""

import math

import numpy as np
import pytest

from src.nonrecip.errors import InvalidArgumentError
from src.nonrecip.fock import (
    Bipartition,
    FockOperator,
    FockSpace,
    acts_only_on,
    basis_state,
    commutator,
    identity,
    is_hermitian,
    local_operator,
    mode_annihilation,
    mode_creation,
    nonlocal_part,
    number_operator,
    parse_operator,
    partial_transpose,
    reduced_state,
)
from tests.conftest import random_density


def test_space_dimensions():
    """Test per-mode and uniform cutoffs."""
    space = FockSpace(3, (1, 2, 0))
    assert space.dims == (2, 3, 1)
    assert space.dimension == 6
    assert FockSpace(2, 3).cutoffs == (3, 3)
    with pytest.raises(InvalidArgumentError):
        FockSpace(2, (1, 2, 3))
    with pytest.raises(InvalidArgumentError):
        FockSpace(0, 1)


def test_ladder_action():
    """Test a|n> = sqrt(n)|n-1> on the second mode."""
    space = FockSpace(2, 3)
    a2 = mode_annihilation(space, 2)
    ket = basis_state(space, [1, 3])
    np.testing.assert_allclose(a2.matrix @ ket, math.sqrt(3) * basis_state(space, [1, 2]))
    np.testing.assert_allclose(a2.matrix @ basis_state(space, [1, 0]), 0.0)


def test_canonical_commutator_below_cutoff(two_modes):
    """Test [a, a^dag] = 1 except on the top level."""
    a1 = mode_annihilation(two_modes, 1)
    comm = commutator(a1, mode_creation(two_modes, 1)).matrix
    for occupations in [(0, 0), (1, 2), (0, 1)]:
        ket = basis_state(two_modes, occupations)
        np.testing.assert_allclose(comm @ ket, ket, atol=1e-14)
    top = basis_state(two_modes, [2, 0])
    np.testing.assert_allclose(comm @ top, -2.0 * top, atol=1e-14)


def test_number_operator(two_modes):
    """Test n = a^dag a."""
    a2 = mode_annihilation(two_modes, 2)
    np.testing.assert_allclose(number_operator(two_modes, 2).matrix, (a2.dag * a2).matrix)


def test_operator_arithmetic(ladders):
    """Test sums, scalar products and powers."""
    a1, a2 = ladders
    x = a1 + a1.adjoint()
    assert is_hermitian(x)
    assert not is_hermitian(a1)
    np.testing.assert_allclose((x**2).matrix, x.matrix @ x.matrix)
    np.testing.assert_allclose((2j * a2).matrix, 2j * a2.matrix)
    np.testing.assert_allclose((np.float64(0.5) * a2).matrix, 0.5 * a2.matrix)
    np.testing.assert_allclose((a1 + 1).matrix, a1.matrix + np.eye(9))
    np.testing.assert_allclose((a1 / 2).matrix, a1.matrix / 2)
    with pytest.raises(InvalidArgumentError):
        a1 ** -1
    with pytest.raises(TypeError):
        a1 + "a2"


def test_operators_on_different_spaces():
    """Test that mixing spaces is rejected."""
    with pytest.raises(InvalidArgumentError):
        mode_annihilation(FockSpace(2, 1), 1) + mode_annihilation(FockSpace(2, 2), 1)


def test_locality(ladders):
    """Test acts_only_on for local and nonlocal operators."""
    a1, a2 = ladders
    assert acts_only_on(a1, [1])
    assert not acts_only_on(a1, [2])
    assert acts_only_on(a1 * a2, [1, 2])
    assert not acts_only_on(a1 * a2, [1])


def test_local_operator_embedding(rng):
    """Test X (x) I ordering with mode 1 slowest."""
    space = FockSpace(2, (1, 2))
    x = rng.normal(size=(3, 3))
    op = local_operator(space, x, 2)
    np.testing.assert_allclose(op.matrix, np.kron(np.eye(2), x))


def test_bipartition_validation(two_modes):
    """Test default and invalid bipartitions."""
    cut = Bipartition.default(two_modes)
    assert cut.first == (1,) and cut.second == (2,)
    with pytest.raises(InvalidArgumentError):
        Bipartition.of(two_modes, [1], [1, 2])
    with pytest.raises(InvalidArgumentError):
        Bipartition.of(two_modes, [1, 2])
    with pytest.raises(InvalidArgumentError):
        Bipartition.of(two_modes, [3])


def test_reduced_state_of_product(rng):
    """Test partial trace of a product state."""
    space = FockSpace(2, (1, 2))
    rho1, rho2 = random_density(rng, 2), random_density(rng, 3)
    rho = np.kron(rho1, rho2)
    np.testing.assert_allclose(reduced_state(rho, space, [1]), rho1, atol=1e-14)
    np.testing.assert_allclose(reduced_state(rho, space, [2]), rho2, atol=1e-14)


def test_partial_transpose_of_product(rng):
    """Test that the partial transpose acts on the chosen factor only."""
    space = FockSpace(2, (1, 2))
    rho1, rho2 = random_density(rng, 2), random_density(rng, 3)
    np.testing.assert_allclose(
        partial_transpose(np.kron(rho1, rho2), space, [2]), np.kron(rho1, rho2.T), atol=1e-14
    )


def test_reduced_state_of_entangled_three_modes(rng):
    """Test partial trace against an explicit index contraction."""
    space = FockSpace(3, (1, 2, 1))
    rho = random_density(rng, space.dimension)
    tensor = rho.reshape(space.dims + space.dims)
    expected = np.einsum("abcdbf->acdf", tensor).reshape(4, 4)
    np.testing.assert_allclose(reduced_state(rho, space, [3, 1]), expected, atol=1e-13)
    np.testing.assert_allclose(reduced_state(rho, space, [1, 2, 3]), rho, atol=1e-13)


def test_partial_transpose_of_bell_state():
    """Test the Bell state picks up a -1/2 eigenvalue under partial transpose."""
    space = FockSpace(2, 1)
    ket = (basis_state(space, [0, 0]) + basis_state(space, [1, 1])) / math.sqrt(2)
    rho = np.outer(ket, ket.conj())
    spectrum = np.linalg.eigvalsh(partial_transpose(rho, space, [2]))
    np.testing.assert_allclose(spectrum, [-0.5, 0.5, 0.5, 0.5], atol=1e-13)
    np.testing.assert_allclose(partial_transpose(rho, space, []), rho, atol=1e-13)


def test_nonlocal_part(rng, ladders):
    """Test that local sums have no nonlocal remainder and products keep one."""
    a1, a2 = ladders
    cut = Bipartition.default(a1.space)
    local = a1 + a1.adjoint() + 2.0 * a2.adjoint() * a2
    assert np.max(np.abs(nonlocal_part(local, cut).matrix)) < 1e-13
    product = a1 * a2.adjoint()
    assert np.max(np.abs(nonlocal_part(product, cut).matrix)) > 0.5


def test_parse_operator(two_modes):
    """Test expression parsing against direct construction."""
    a1 = mode_annihilation(two_modes, 1)
    a2 = mode_annihilation(two_modes, 2)
    parsed = parse_operator("a1 - 1j*dag(a_2) + 0.5*n1 + 2*I", two_modes)
    expected = a1 - 1j * a2.adjoint() + 0.5 * number_operator(two_modes, 1) + 2 * identity(two_modes)
    np.testing.assert_allclose(parsed.matrix, expected.matrix)
    assert parsed.label == "a1 - 1j*dag(a_2) + 0.5*n1 + 2*I"
    np.testing.assert_allclose(
        parse_operator("adjoint(a1)**2 * exp(1j*pi/2) / sqrt(2)", two_modes).matrix,
        1j * (a1.adjoint() ** 2).matrix / math.sqrt(2),
        atol=1e-15,
    )
    np.testing.assert_allclose(parse_operator("0", two_modes).matrix, 0.0)


@pytest.mark.parametrize(
    "expr",
    [
        "a3",
        "b1",
        "a1 +",
        "a1 / a2",
        "a1 ** 0.5",
        "sqrt(a1)",
        "open('x')",
        "a1.T",
        "2**99999999",
        "a1 ** 100",
        "9**9**9",
    ],
)
def test_parse_operator_errors(two_modes, expr):
    """Test rejected expressions."""
    with pytest.raises(InvalidArgumentError):
        parse_operator(expr, two_modes)


def test_basis_state_bounds(two_modes):
    """Test occupation checks."""
    with pytest.raises(InvalidArgumentError):
        basis_state(two_modes, [3, 0])
    with pytest.raises(InvalidArgumentError):
        basis_state(two_modes, [0])


def test_operator_shape_check(two_modes):
    """Test the dimension check on construction."""
    with pytest.raises(InvalidArgumentError):
        FockOperator(two_modes, np.eye(4))
