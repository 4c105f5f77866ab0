import numpy as np
import pytest

from qmtk.errdist import (
    check_heisenberg_relation,
    check_universal_relation,
    commutator_bound,
    moment_operator,
    rms_disturbance,
    rms_noise,
)
from qmtk.instruments import (
    evolution_unitary,
    instrument_of_process,
    is_completely_positive,
    povm_of_instrument,
)
from qmtk.linops import DensityState, InvalidStateError, dagger, std_dev
from qmtk.models import (
    GridSpace,
    contractive_instrument,
    gaussian_wavefunction,
    haar_unitary,
    quantize_unit_vector,
    random_cp_instrument,
    random_measuring_process,
    von_neumann_instrument,
)

GRID = GridSpace(64, 1.0, 1.0)


def test_grid_operators_structure():
    x = GRID.x_op
    assert np.abs(x.op - np.diag(np.diag(x.op))).max() == 0.0
    assert x.eigenvalues[0] == -0.5 and len(x.eigenvalues) == 64
    f = GRID.dft
    p = GRID.p_op
    rebuilt = dagger(f) @ np.diag(GRID.p_values) @ f
    assert np.abs(p.op - rebuilt).max() < 1e-9
    assert np.abs(f @ dagger(f) - np.eye(64)).max() < 1e-12


def test_grid_momentum_generates_translations():
    # exp(-i x_s p / hbar) must equal the cyclic shift by s grid points
    s = 5
    x_s = s * GRID.length / GRID.n_points
    shift = evolution_unitary(GRID.p_op.op, x_s, GRID.hbar)
    assert np.abs(shift - GRID.translation(s)).max() < 1e-9


def test_grid_rejects_bad_parameters():
    with pytest.raises(ValueError):
        GridSpace(100)
    with pytest.raises(ValueError):
        GridSpace(64, -1.0)


def test_commutator_defect_calibration_band():
    grid = GridSpace(256, 1.0, 1.0)
    for frac in (1 / 64, 1 / 40, 1 / 32, 1 / 20):
        exact = gaussian_wavefunction(grid, 0.0, grid.length * frac, exact_norm=False)
        assert grid.commutator_defect(exact) <= 1e-8
        quantized = gaussian_wavefunction(grid, 0.0, grid.length * frac)
        assert grid.commutator_defect(quantized) <= 5e-5
    # outside the band the defect blows up; document the cliff
    wide = gaussian_wavefunction(grid, 0.0, grid.length / 8, exact_norm=False)
    assert grid.commutator_defect(wide) > 1e-3


def test_quantize_unit_vector_norm_is_exact_in_any_order():
    rng = np.random.default_rng(3)
    v = quantize_unit_vector(np.exp(-np.linspace(-3, 3, 128) ** 2))
    assert np.vdot(v, v).real == 1.0
    for _ in range(5):
        perm = rng.permutation(128)
        assert np.vdot(v[perm], v[perm]).real == 1.0
    assert float(np.sum((v.real * v.real)[::-1])) == 1.0


def test_von_neumann_delta_probe_is_projective():
    xi = np.zeros(GRID.n_points, dtype=complex)
    xi[GRID.n_points // 2] = 1.0  # delta at x = 0
    inst = von_neumann_instrument(GRID, xi)
    for k, (v, ks) in enumerate(inst.outcomes):
        expected = np.zeros((64, 64), dtype=complex)
        expected[k, k] = 1.0
        assert np.abs(ks[0] - expected).max() == 0.0


def test_von_neumann_rejects_unnormalized_probe():
    with pytest.raises(InvalidStateError):
        von_neumann_instrument(GRID, np.ones(64, dtype=complex))


def test_von_neumann_noise_matches_probe_moments():
    # widths inside the calibrated band keep wrap-around leakage negligible
    xi = gaussian_wavefunction(GRID, 0.0, GRID.length / 24)
    inst = von_neumann_instrument(GRID, xi)
    rho = DensityState.pure(gaussian_wavefunction(GRID, 0.0, GRID.length / 20))
    eps = rms_noise(inst, GRID.x_op, rho, "formula")
    probe_sigma = np.sqrt(float((GRID.x_values**2 * np.abs(xi) ** 2).sum()))
    assert eps == pytest.approx(probe_sigma, abs=1e-9)
    eta = rms_disturbance(inst, GRID.p_op, rho, "formula")
    probe_p2 = float(np.real(np.vdot(xi, GRID.p_op.op @ GRID.p_op.op @ xi)))
    assert eta == pytest.approx(np.sqrt(probe_p2), abs=1e-6)


def test_von_neumann_moment_oracle():
    # the meter reads x_j minus the probe displacement, so on the interior
    # Pi^(1) = x - <x>_probe and Pi^(2) = x^2 - 2 <x>_probe x + <x^2>_probe
    xi = gaussian_wavefunction(GRID, 0.0, GRID.length / 32)
    povm = povm_of_instrument(von_neumann_instrument(GRID, xi))
    p1 = moment_operator(povm, 1)
    p2 = moment_operator(povm, 2)
    x = GRID.x_op.op
    w = np.abs(xi) ** 2
    m1 = float((GRID.x_values * w).sum())
    m2 = float((GRID.x_values**2 * w).sum())
    interior = np.abs(GRID.x_values) <= GRID.length / 8
    eye = np.eye(64)
    assert np.abs(np.diag(p1 - x + m1 * eye)[interior]).max() < 1e-10
    assert np.abs(np.diag(p2 - x @ x + 2 * m1 * x - m2 * eye)[interior]).max() < 1e-10


def test_von_neumann_satisfies_heisenberg_on_grid():
    xi = gaussian_wavefunction(GRID, 0.0, GRID.length / 18)
    inst = von_neumann_instrument(GRID, xi)
    rho = DensityState.pure(gaussian_wavefunction(GRID, 0.0, GRID.length / 16))
    eps = rms_noise(inst, GRID.x_op, rho, "formula")
    eta = rms_disturbance(inst, GRID.p_op, rho, "formula")
    rhs = commutator_bound(GRID.x_op, GRID.p_op, rho)
    assert eps * eta >= rhs - 1e-6
    assert eps * eta == pytest.approx(GRID.hbar / 2, abs=1e-4)


def test_contractive_model_error_free_and_heisenberg_violating():
    xi = gaussian_wavefunction(GRID, 0.0, GRID.length / 16)
    inst = contractive_instrument(GRID, xi)
    rho = DensityState.pure(gaussian_wavefunction(GRID, 0.0, GRID.length / 14))
    povm = povm_of_instrument(inst)
    for k, (v, e) in enumerate(povm.outcomes):
        expected = np.zeros((64, 64))
        expected[k, k] = 1.0
        assert np.array_equal(e, expected)  # POVM is exactly E^x
    eps = rms_noise(povm, GRID.x_op, rho, "formula")
    assert eps == 0.0
    eta = rms_disturbance(inst, GRID.p_op, rho, "formula")
    rhs = commutator_bound(GRID.x_op, GRID.p_op, rho)
    assert eps * eta == 0.0 < rhs
    # universal relation survives through the sigma(A) eta(B) term
    assert std_dev(GRID.x_op.op, rho.op) * eta >= rhs - 1e-9


def test_contractive_model_posterior_is_translated_probe():
    xi = gaussian_wavefunction(GRID, 0.0, GRID.length / 16)
    inst = contractive_instrument(GRID, xi)
    k = 40
    value, (kraus,) = inst.outcomes[k]
    rho = DensityState.pure(gaussian_wavefunction(GRID, 0.0, GRID.length / 10))
    out = kraus @ rho.op @ dagger(kraus)
    xi_k = np.roll(xi, k - GRID.n_points // 2)
    prob = rho.op[k, k].real
    assert np.abs(out - prob * np.outer(xi_k, xi_k.conj())).max() < 1e-12


def test_random_measuring_process_construction():
    mp1 = random_measuring_process(3, 4, seed=11)
    mp2 = random_measuring_process(3, 4, seed=11)
    assert np.array_equal(mp1.unitary, mp2.unitary)
    assert np.array_equal(mp1.probe_state.op, mp2.probe_state.op)
    assert np.abs(dagger(mp1.unitary) @ mp1.unitary - np.eye(12)).max() < 1e-12
    inst = instrument_of_process(mp1)
    total = sum(dagger(k) @ k for _, ks in inst.outcomes for k in ks)
    assert np.abs(total - np.eye(3)).max() < 1e-10
    assert len(set(mp1.meter.eigenvalues)) == 4


def test_random_cp_instrument_construction():
    inst1 = random_cp_instrument(3, 3, 2, seed=5)
    inst2 = random_cp_instrument(3, 3, 2, seed=5)
    for (v1, ks1), (v2, ks2) in zip(inst1.outcomes, inst2.outcomes):
        assert v1 == v2 and all(np.array_equal(a, b) for a, b in zip(ks1, ks2))
    total = sum(dagger(k) @ k for _, ks in inst1.outcomes for k in ks)
    assert np.abs(total - np.eye(3)).max() < 1e-12
    assert is_completely_positive(inst1)[0]
    povm = povm_of_instrument(inst1)
    for _, e in povm.outcomes:
        assert np.linalg.eigvalsh(e).min() >= -1e-12


def test_haar_unitary_determinism_and_unitarity():
    u1 = haar_unitary(5, 9)
    u2 = haar_unitary(5, 9)
    assert np.array_equal(u1, u2)
    assert np.abs(dagger(u1) @ u1 - np.eye(5)).max() < 1e-12


def test_grid_models_state_independent_mean_noise_condition():
    # zero-mean probe makes n(A) and d(B) near-scalar, the condition-theorem
    # term small, and the product relation hold (von Neumann model)
    xi = gaussian_wavefunction(GRID, 0.0, GRID.length / 18)
    inst = von_neumann_instrument(GRID, xi)
    rho = DensityState.pure(gaussian_wavefunction(GRID, 0.0, GRID.length / 16))
    res = check_heisenberg_relation(inst, GRID.x_op, GRID.p_op, rho)
    assert res.condition_term < 1e-6
    assert res.lhs >= res.rhs - 1e-6
    uni = check_universal_relation(inst, GRID.x_op, GRID.p_op, rho)
    assert uni.holds
