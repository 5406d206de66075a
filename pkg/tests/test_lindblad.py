"""Tests for Lindblad models, integration, steady states and reductions."""

import logging
import math

import numpy as np
import pytest

import src.nonrecip.lindblad as lindblad_module
from src.nonrecip.errors import (
    IntegrationError,
    InvalidArgumentError,
    InvalidCouplingError,
    InvalidModelError,
    NonUniqueSteadyStateError,
    StepSizeError,
)
from src.nonrecip.fock import (
    FockSpace,
    identity,
    local_operator,
    mode_annihilation,
    nonlocal_part,
    number_operator,
)
from src.nonrecip.lindblad import (
    Conjugated,
    DensityMatrix,
    Directional,
    Jump,
    LindbladModel,
    ModelSpec,
    Pretuned,
    adiabatic_eliminate,
    build_nonreciprocal,
    compare_adiabatic,
    dissipator,
    dissipator_superoperator,
    effective_couplings,
    evolve,
    full_ring_model,
    interaction_strengths,
    lindblad_model_from_spec,
    mean_value_eom_check,
    nonhermitian_part,
    quadratic_hamiltonian,
    ring_master_equation,
    single_excitation_matrix,
    steady_state,
    superoperator_from_map,
    vec,
    zero_model,
)
from tests.conftest import random_density, random_hermitian


@pytest.fixture
def one_mode():
    return FockSpace(1, 1)


def decaying_mode(space, kappa=1.0):
    return LindbladModel(space, 0.0 * identity(space), ((kappa, mode_annihilation(space, 1)),))


# ============================================================================
# States and dissipators
# ============================================================================


def test_density_matrix_validation(one_mode):
    """Test trace, Hermiticity and positivity checks."""
    with pytest.raises(InvalidArgumentError):
        DensityMatrix(one_mode, np.diag([0.5, 0.4]))
    with pytest.raises(InvalidArgumentError):
        DensityMatrix(one_mode, np.array([[0.5, 0.1], [0.2, 0.5]]))
    with pytest.raises(InvalidArgumentError):
        DensityMatrix(one_mode, np.eye(3) / 3)
    with pytest.raises(InvalidArgumentError):
        DensityMatrix(one_mode, np.diag([1.5, -0.5])).check_positive()
    assert DensityMatrix.fock(one_mode, [1]).matrix[1, 1] == 1.0


def test_single_photon_decay_generator(one_mode):
    """Test D[a]|1><1| = |0><0| - |1><1|."""
    a = mode_annihilation(one_mode, 1)
    np.testing.assert_allclose(dissipator(a, DensityMatrix.fock(one_mode, [1])), np.diag([1.0, -1.0]))
    np.testing.assert_allclose(dissipator(identity(one_mode), np.eye(2) / 2), 0.0)


def test_dissipator_is_traceless(rng, ladders):
    """Test tr D[a1 - i a2^dag] rho = 0."""
    a1, a2 = ladders
    jump = a1 - 1j * a2.adjoint()
    rho = random_density(rng, 9)
    assert abs(np.trace(dissipator(jump, rho))) < 1e-12


def test_dissipator_space_mismatch(one_mode, two_modes):
    """Test that operator and state must share a space."""
    with pytest.raises(InvalidArgumentError):
        dissipator(mode_annihilation(two_modes, 1), DensityMatrix.fock(one_mode, [0]))


def test_superoperator_matches_map(rng, ladders):
    """Test the column-stacking superoperator of D[L]."""
    a1, a2 = ladders
    jump = a1 + 0.3j * a2
    rho = random_density(rng, 9)
    direct = superoperator_from_map(lambda r: dissipator(jump, r), 9)
    np.testing.assert_allclose(direct, dissipator_superoperator(jump), atol=1e-12)
    np.testing.assert_allclose(
        dissipator_superoperator(jump) @ vec(rho), vec(dissipator(jump, rho)), atol=1e-12
    )


# ============================================================================
# Non-reciprocal recipe
# ============================================================================


def test_coherent_part(ladders):
    """Test H = (lam/2)(O1 O2 + h.c.)."""
    a1, a2 = ladders
    model = build_nonreciprocal(a1, a2, 0.8, Directional(1.0, 1))
    product = a1 * a2
    np.testing.assert_allclose(
        model.hamiltonian.matrix, 0.4 * (product + product.adjoint()).matrix, atol=1e-14
    )


def test_jump_operators(ladders):
    """Test the three jump families."""
    a1, a2 = ladders
    eta = 2.5
    (directional,) = build_nonreciprocal(a1, a2, 0.5, Directional(eta, -1)).jumps
    assert directional.rate == 0.5
    np.testing.assert_allclose(
        directional.operator.matrix,
        (math.sqrt(eta) * a1 + 1j / math.sqrt(eta) * a2.adjoint()).matrix,
    )
    (conjugated,) = build_nonreciprocal(a1, a2, 0.5, Conjugated(eta, 1)).jumps
    np.testing.assert_allclose(
        conjugated.operator.matrix,
        (math.sqrt(eta) * a1.adjoint() - 1j / math.sqrt(eta) * a2).matrix,
    )
    (pretuned,) = build_nonreciprocal(a1, a2, 0.5, Pretuned(0.7, 0.3)).jumps
    assert pretuned.rate == 0.7
    np.testing.assert_allclose(
        pretuned.operator.matrix, (a1 + 1j * np.exp(0.3j) * a2.adjoint()).matrix
    )


def test_pretuned_equals_directional(ladders):
    """Test identical Liouvillians for G = lam, theta = pi and eta = 1."""
    a1, a2 = ladders
    lam = 0.9
    pretuned = build_nonreciprocal(a1, a2, lam, Pretuned(lam, math.pi)).liouvillian()
    directional = build_nonreciprocal(a1, a2, lam, Directional(1.0, 1)).liouvillian()
    assert np.max(np.abs(pretuned - directional)) < 1e-12


def test_zero_coupling_is_zero_generator(ladders):
    """Test lam = 0 and G = 0."""
    a1, a2 = ladders
    model = build_nonreciprocal(a1, a2, 0.0, Pretuned(0.0, 1.0))
    assert np.max(np.abs(model.liouvillian())) == 0.0


def test_complex_lambda_is_absorbed(ladders):
    """Test that the phase of lam moves into O1."""
    a1, a2 = ladders
    model = build_nonreciprocal(a1, a2, 2j, Directional())
    assert model.coupling.lam == pytest.approx(2.0)
    np.testing.assert_allclose(model.coupling.o1.matrix, 1j * a1.matrix)


def test_locality_gate(ladders):
    """Test O1 and O2 must be local to their subsystems."""
    a1, a2 = ladders
    with pytest.raises(InvalidCouplingError):
        build_nonreciprocal(a1 * a2, a2, 1.0, Directional())
    with pytest.raises(InvalidCouplingError):
        build_nonreciprocal(a1, a1, 1.0, Directional())


@pytest.mark.parametrize("variant", [Directional(0.0, 1), Directional(1.0, 0), Conjugated(-1.0, 1)])
def test_invalid_variants(ladders, variant):
    """Test eta and sign validation."""
    a1, a2 = ladders
    with pytest.raises(InvalidArgumentError):
        build_nonreciprocal(a1, a2, 1.0, variant)


def test_effective_couplings():
    """Test the closed-form interaction strengths."""
    fully = effective_couplings(1.0, 1.0, math.pi)
    assert fully.lam12 == pytest.approx(0.0, abs=1e-15)
    assert fully.lam21 == pytest.approx(2.0)
    assert fully.directional
    coherent = effective_couplings(1.0, 0.0, 0.4)
    assert (coherent.lam12, coherent.lam21) == (1.0, 1.0)
    assert not coherent.directional
    quarter = effective_couplings(1.0, 1.0, math.pi / 2)
    assert quarter.lam12 == pytest.approx(1 - 1j)
    assert quarter.lam21 == pytest.approx(1 + 1j)


def test_interaction_strengths_of_pretuned(ladders):
    """Test that model-derived strengths match the closed form."""
    a1, a2 = ladders
    model = build_nonreciprocal(a1, a2, 0.6, Pretuned(0.4, 1.1))
    strengths = interaction_strengths(model)
    expected = effective_couplings(0.6, 0.4, 1.1)
    assert strengths.lam12 == pytest.approx(expected.lam12)
    assert strengths.lam21 == pytest.approx(expected.lam21)


@pytest.mark.parametrize("eta", [0.2, 1.0, 3.7])
def test_interaction_is_independent_of_eta(ladders, eta):
    """Test lam12 = 0 and lam21 = 2 lam for every eta."""
    a1, a2 = ladders
    strengths = interaction_strengths(build_nonreciprocal(a1, a2, 0.5, Directional(eta, 1)))
    assert abs(strengths.lam12) < 1e-10
    assert strengths.lam21 == pytest.approx(1.0, abs=1e-10)
    reverse = interaction_strengths(build_nonreciprocal(a1, a2, 0.5, Conjugated(eta, -1)))
    assert abs(reverse.lam21) < 1e-10


def test_interaction_strengths_need_descriptor(two_modes):
    """Test plain models are rejected."""
    with pytest.raises(InvalidArgumentError):
        interaction_strengths(zero_model(two_modes))


@pytest.mark.parametrize(
    "variant", [Pretuned(0.4, 1.1), Directional(2.0, 1), Directional(0.5, -1), Conjugated(1.5, 1)]
)
def test_mean_value_decomposition(rng, ladders, variant):
    """Test d<A>/dt for observables local to either subsystem."""
    a1, a2 = ladders
    model = build_nonreciprocal(a1 + 0.2 * a1.adjoint(), a2, 0.6, variant)
    model = model.with_hamiltonian(0.3 * number_operator(a1.space, 2))
    model = model.with_jumps((0.2, a1))
    rho = random_density(rng, 9)
    for observable in [a1, a1.adjoint() * a1, a2, a2 + 0.5j * a2.adjoint()]:
        assert mean_value_eom_check(model, observable, rho) < 1e-10


def test_mean_value_without_dissipation(rng, ladders):
    """Test the plain Heisenberg term at G = 0."""
    a1, a2 = ladders
    model = build_nonreciprocal(a1, a2, 0.6, Pretuned(0.0, 0.0))
    assert mean_value_eom_check(model, a2, random_density(rng, 9)) < 1e-10
    with pytest.raises(InvalidArgumentError):
        mean_value_eom_check(model, a1 * a2, random_density(rng, 9))


def test_trace_preservation(rng, ladders):
    """Test tr(L rho) = 0 for every model family."""
    a1, a2 = ladders
    models = [
        build_nonreciprocal(a1, a2, 0.7, Pretuned(0.3, 0.9)),
        build_nonreciprocal(a1 + a1.adjoint(), a2.adjoint() * a2, 1.2, Directional(0.4, -1)),
        build_nonreciprocal(a1, a2, 0.5, Conjugated(1.3, 1)),
        ring_master_equation(1.0, 0.5, 2.0, a1.space),
    ]
    for _ in range(100):
        rho = random_density(rng, 9)
        for model in models:
            assert abs(np.trace(model.apply(rho))) < 1e-12


def test_complete_directionality(rng, qubit_pair):
    """Test that subsystem 1 ignores local terms on subsystem 2 and not vice versa."""
    a1, a2 = mode_annihilation(qubit_pair, 1), mode_annihilation(qubit_pair, 2)
    model = build_nonreciprocal(a1 + 0.5 * a1.adjoint(), a2, 0.8, Directional(1.7, 1))
    rho0 = DensityMatrix(qubit_pair, random_density(rng, 4))
    local2 = local_operator(qubit_pair, random_hermitian(rng, 2), 2)
    local1 = local_operator(qubit_pair, random_hermitian(rng, 2), 1)

    base = evolve(model, rho0, 3.0, 0.05, method="expm")
    shifted2 = evolve(model.with_hamiltonian(local2), rho0, 3.0, 0.05, method="expm")
    shifted1 = evolve(model.with_hamiltonian(local1), rho0, 3.0, 0.05, method="expm")
    for n in range(len(base.times)):
        np.testing.assert_allclose(
            base.state(n).reduced([1]), shifted2.state(n).reduced([1]), atol=1e-9
        )
    gap = max(
        np.max(np.abs(base.state(n).reduced([2]) - shifted1.state(n).reduced([2])))
        for n in range(len(base.times))
    )
    assert gap > 1e-3


def test_dissipative_interaction_does_not_split(rng, ladders):
    """Test D[O1 - i O2^dag] differs from the sum over Hermitian parts."""
    a1, a2 = ladders
    for _ in range(5):
        o1 = np.exp(1j * rng.uniform(0, 2 * math.pi)) * a1
        o2 = np.exp(1j * rng.uniform(0, 2 * math.pi)) * a2
        x1, p1 = 0.5 * (o1 + o1.adjoint()), -0.5j * (o1 - o1.adjoint())
        x2, p2 = 0.5 * (o2 + o2.adjoint()), -0.5j * (o2 - o2.adjoint())
        whole = dissipator_superoperator(o1 - 1j * o2.adjoint())
        parts = dissipator_superoperator(x1 - 1j * x2) + dissipator_superoperator(p1 - 1j * p2)
        assert np.linalg.norm(whole - parts) > 0.01


# ============================================================================
# Non-Hermitian part and ring reduction
# ============================================================================


def test_nonhermitian_part_of_tuned_ring(qubit_pair):
    """Test H_NH couples 2 -> 1 with -2t and 1 -> 2 not at all."""
    t = 0.7
    model = ring_master_equation(t, math.pi / 2, 2 * t, qubit_pair)
    m = single_excitation_matrix(nonhermitian_part(model))
    assert m[1, 0] == pytest.approx(0.0, abs=1e-12)
    assert m[0, 1] == pytest.approx(-2 * t, abs=1e-12)


def test_nonhermitian_part_without_jumps(two_modes):
    """Test H_NH = H for a closed model."""
    h = number_operator(two_modes, 1)
    model = LindbladModel(two_modes, h)
    np.testing.assert_allclose(nonhermitian_part(model).matrix, h.matrix)


def test_directional_model_has_no_cross_decay(ladders):
    """Test the anti-Hermitian part of H_NH is local for Hermitian O1, O2."""
    a1, a2 = ladders
    model = build_nonreciprocal(a1 + a1.adjoint(), a2 + a2.adjoint(), 0.9, Directional(0.6, 1))
    decay = nonhermitian_part(model) - model.hamiltonian
    cut = model.coupling.cut
    assert np.max(np.abs(nonlocal_part(decay, cut).matrix)) < 1e-12


def test_ring_mean_values_follow_effective_matrix(rng, qubit_pair):
    """Test d<a>/dt = -i M <a> with M the single-excitation block of H_NH."""
    model = ring_master_equation(1.0, math.pi / 2, 2.0, qubit_pair)
    m = single_excitation_matrix(nonhermitian_part(model))
    rho = np.zeros((4, 4), dtype=complex)
    rho[:3, :3] = random_density(rng, 3)
    ladders = [mode_annihilation(qubit_pair, j) for j in (1, 2)]
    means = np.array([op.expect(rho) for op in ladders])
    rates = np.array([op.expect(model.apply(rho)) for op in ladders])
    np.testing.assert_allclose(rates, -1j * m @ means, atol=1e-12)
    # mode 2 is not driven by mode 1
    assert abs(m[1, 0]) < 1e-12


def test_ring_without_damping_is_beam_splitter(qubit_pair):
    """Test symmetric hopping at kappa~ = 0."""
    m = single_excitation_matrix(nonhermitian_part(ring_master_equation(1.0, 1.0, 0.0, qubit_pair)))
    np.testing.assert_allclose(m, [[0, -1], [-1, 0]], atol=1e-14)


def test_ring_master_equation_validation(two_modes):
    """Test mode count and rate checks."""
    with pytest.raises(InvalidArgumentError):
        ring_master_equation(1.0, 0.0, 1.0, FockSpace(3, 1))
    with pytest.raises(InvalidArgumentError):
        ring_master_equation(1.0, 0.0, -1.0, two_modes)


def test_quadratic_hamiltonian_round_trip(rng):
    """Test h -> sum h_jk a_j^dag a_k -> single-excitation block."""
    space = FockSpace(3, 1)
    h = random_hermitian(rng, 3)
    np.testing.assert_allclose(single_excitation_matrix(quadratic_hamiltonian(h, space)), h, atol=1e-14)
    with pytest.raises(InvalidArgumentError):
        quadratic_hamiltonian(np.eye(2), space)


# ============================================================================
# Adiabatic elimination
# ============================================================================


def test_elimination_at_directional_point():
    """Test t21 = 0 and |t12| = 2t when 2 t'^2 / kappa3 = t at phi = pi/6."""
    t, kappa3 = 1.0, 100.0
    result = adiabatic_eliminate(t, math.sqrt(t * kappa3 / 2), math.pi / 6, 0.0, 0.0, kappa3)
    assert abs(result.t21) < 1e-14
    assert abs(result.t12) == pytest.approx(2 * t, abs=1e-12)
    assert result.kappa_tilde == pytest.approx(2 * t)
    assert len(result.model.jumps) == 3


def test_elimination_validity_warnings(caplog):
    """Test the adiabaticity guard is a warning, not an error."""
    with caplog.at_level(logging.WARNING, logger="src.nonrecip.lindblad"):
        result = adiabatic_eliminate(1.0, 1.0, 0.0, 0.0, 0.0, 5.0)
    assert result.validity_ratio == pytest.approx(5.0)
    assert "outside validity" in caplog.text
    with pytest.raises(InvalidArgumentError):
        adiabatic_eliminate(1.0, 1.0, 0.0, 0.0, 0.0, 0.0)


def test_full_ring_model_shape():
    """Test the three-mode model has one decay channel per mode."""
    space = FockSpace(3, 1)
    model = full_ring_model(1.0, 2.0, 0.3, 0.1, 0.2, 50.0, space)
    assert [j.rate for j in model.jumps] == [0.1, 0.2, 50.0]
    with pytest.raises(InvalidArgumentError):
        full_ring_model(1.0, 2.0, 0.3, 0.1, 0.2, 50.0, FockSpace(2, 1))


def test_eliminated_model_tracks_full_model():
    """Test 5% agreement at kappa3 = 100 t and roughly 1/kappa3 convergence."""
    coarse = compare_adiabatic(1.0, 100.0)
    fine = compare_adiabatic(1.0, 200.0)
    assert coarse.relative_error < 0.05
    assert 1.5 <= coarse.relative_error / fine.relative_error <= 3.0


# ============================================================================
# Integration and steady states
# ============================================================================


def test_zero_generator_keeps_state(rng, two_modes):
    """Test rho(t) = rho0 without dynamics."""
    rho0 = DensityMatrix(two_modes, random_density(rng, 9))
    run = evolve(zero_model(two_modes), rho0, 1.0, 0.1)
    np.testing.assert_allclose(run.final.matrix, rho0.matrix, atol=1e-14)


def test_exponential_decay(one_mode):
    """Test <n>(t) = exp(-kappa t)."""
    kappa = 1.3
    run = evolve(decaying_mode(one_mode, kappa), DensityMatrix.fock(one_mode, [1]), 2.0, 0.01)
    n = run.expect(number_operator(one_mode, 1)).real
    np.testing.assert_allclose(n, np.exp(-kappa * run.times), atol=1e-6)


def test_rk4_matches_expm(rng, ladders):
    """Test both integrators on a driven non-reciprocal model."""
    a1, a2 = ladders
    model = build_nonreciprocal(a1, a2, 0.5, Directional(1.2, 1)).with_hamiltonian(
        0.3 * (a1 + a1.adjoint())
    )
    rho0 = DensityMatrix(a1.space, random_density(rng, 9))
    rk4 = evolve(model, rho0, 1.0, 0.01, store_every=25)
    exact = evolve(model, rho0, 1.0, 0.01, method="expm", store_every=25)
    assert len(rk4.times) == 5
    np.testing.assert_allclose(rk4.states, exact.states, atol=1e-6)


def test_store_every_keeps_final_state(one_mode):
    """Test sampling keeps t = 0 and t_final."""
    run = evolve(decaying_mode(one_mode), DensityMatrix.fock(one_mode, [1]), 1.0, 0.01, store_every=30)
    assert run.times[0] == 0.0
    assert run.times[-1] == pytest.approx(1.0)
    assert len(run.times) == 5


def test_step_size_guard(one_mode):
    """Test dt * rate bound >= 0.1 is refused."""
    with pytest.raises(StepSizeError) as info:
        evolve(decaying_mode(one_mode), DensityMatrix.fock(one_mode, [1]), 1.0, 0.5)
    assert info.value.exit_code == 3


class LeakyGenerator:
    """Trace-losing map d rho/dt = -rho."""

    def __init__(self, space):
        self.space = space

    def apply(self, rho):
        return -rho

    def liouvillian(self):
        return -np.eye(self.space.dimension**2, dtype=complex)

    def rate_bound(self):
        return 1.0


def test_trace_drift_is_an_integration_error(one_mode):
    """Test a generator that loses trace stops the run."""
    rho = DensityMatrix.fock(one_mode, [0])
    for method in ("rk4", "expm"):
        with pytest.raises(IntegrationError) as info:
            evolve(LeakyGenerator(one_mode), rho, 1.0, 0.01, method=method)
        assert info.value.exit_code == 3


def test_evolve_argument_errors(one_mode, two_modes):
    """Test bad steps, methods and spaces."""
    rho = DensityMatrix.fock(one_mode, [0])
    with pytest.raises(InvalidArgumentError):
        evolve(decaying_mode(one_mode), rho, 1.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        evolve(decaying_mode(one_mode), rho, 1.0, 0.01, method="euler")
    with pytest.raises(InvalidArgumentError):
        evolve(zero_model(two_modes), rho, 1.0, 0.01)


def test_steady_state_of_decay(one_mode):
    """Test a decaying mode relaxes to vacuum."""
    np.testing.assert_allclose(steady_state(decaying_mode(one_mode)).matrix, np.diag([1.0, 0.0]), atol=1e-12)


def test_steady_state_of_cascade(ladders):
    """Test an undriven cascade relaxes to the joint vacuum."""
    a1, a2 = ladders
    model = build_nonreciprocal(a1, a2.adjoint(), 1.0, Directional(1.0, 1))
    rho = steady_state(model)
    assert rho.matrix[0, 0].real == pytest.approx(1.0, abs=1e-10)


def test_steady_state_matches_long_evolution(one_mode):
    """Test a driven damped mode against long-time integration."""
    a = mode_annihilation(one_mode, 1)
    model = LindbladModel(one_mode, 0.4 * (a + a.adjoint()), ((1.0, a),))
    rho_ss = steady_state(model)
    late = evolve(model, DensityMatrix.fock(one_mode, [0]), 40.0, 0.05, method="expm").final
    np.testing.assert_allclose(rho_ss.matrix, late.matrix, atol=1e-6)


def test_degenerate_steady_state(two_modes):
    """Test that a closed system has no unique steady state."""
    with pytest.raises(NonUniqueSteadyStateError):
        steady_state(zero_model(two_modes))


def test_large_steady_state_uses_sparse_check(mocker):
    """Test Liouvillians above the dense SVD size go through the Lanczos estimate."""
    space = FockSpace(2, 5)
    a1, a2 = mode_annihilation(space, 1), mode_annihilation(space, 2)
    model = build_nonreciprocal(a1, a2.adjoint(), 1.0, Directional(1.0, 1))
    spy = mocker.spy(lindblad_module, "svds")
    rho = steady_state(model)
    assert spy.call_count == 1
    assert rho.matrix[0, 0].real == pytest.approx(1.0, abs=1e-10)

    mocker.patch("src.nonrecip.lindblad._smallest_singular_value", return_value=1e-12)
    with pytest.raises(NonUniqueSteadyStateError):
        steady_state(model)


def test_model_validation(two_modes, ladders):
    """Test Hermiticity and rate checks on construction."""
    a1, _ = ladders
    with pytest.raises(InvalidModelError):
        LindbladModel(two_modes, a1)
    with pytest.raises(InvalidModelError):
        LindbladModel(two_modes, 0.0 * a1, (Jump(-1.0, a1),))


def test_model_from_spec():
    """Test JSON model ingestion."""
    spec = ModelSpec.model_validate(
        {
            "modes": 2,
            "cutoff": [1, 2],
            "hamiltonian": "0.5*(a1*dag(a2) + a2*dag(a1))",
            "jumps": [{"rate": 1.0, "operator": "a2"}],
        }
    )
    model = lindblad_model_from_spec(spec)
    assert model.space.dims == (2, 3)
    assert model.jumps[0].rate == 1.0
    assert steady_state(model).matrix[0, 0].real == pytest.approx(1.0, abs=1e-10)
