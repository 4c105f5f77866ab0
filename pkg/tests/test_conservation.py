import numpy as np
import pytest

from qmtk.conservation import (
    GateTarget,
    Implementation,
    angular_momentum_operators,
    cb_distance_lower_bound,
    commutant_hermitian_basis,
    conserving_meter,
    covariant_unitary,
    gate_fidelity,
    gate_infidelity_bound,
    implementation_from_kraus,
    perfect_implementation,
    random_covariant_implementation,
    random_covariant_process,
    spin_half_operators,
    verify_way,
    way_lower_bound,
    yanase_bound,
    yanase_error_probability,
)
from qmtk.linops import (
    DensityState,
    InvalidOperatorError,
    commutator,
    dagger,
    spectral_decompose,
    std_dev,
    tensor,
)
from qmtk.models import haar_unitary, random_density, random_measuring_process

SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


def total_spin(n, hbar=1.0):
    s_ops = spin_half_operators(hbar)
    l_ops = angular_momentum_operators(n, hbar)
    return [tensor(s, np.eye(n + 1)) + tensor(np.eye(2), l) for s, l in zip(s_ops, l_ops)]


def test_angular_momentum_commutation_relations():
    for n in (1, 2, 3, 4):
        lx, ly, lz = angular_momentum_operators(n)
        assert np.abs(commutator(lx, ly) - 1j * lz).max() < 1e-12
        j = n / 2
        casimir = lx @ lx + ly @ ly + lz @ lz
        assert np.abs(casimir - j * (j + 1) * np.eye(n + 1)).max() < 1e-12


def test_commutant_of_irreducible_action_is_trivial():
    basis = commutant_hermitian_basis(list(spin_half_operators()))
    assert len(basis) == 1  # scalars only


def test_commutant_dimension_counts_irreps():
    # C^2 (x) C^(N+1) splits into two spin irreps for N >= 1
    assert len(commutant_hermitian_basis(total_spin(2))) == 2


def test_covariant_unitary_commutes_with_total_spin():
    for n in range(5):
        u = covariant_unitary(n, seed=100 + n)
        assert np.abs(dagger(u) @ u - np.eye(2 * (n + 1))).max() < 1e-12
        for j in total_spin(n):
            assert np.abs(commutator(u, j)).max() < 1e-10


def test_swap_is_covariant():
    for j in total_spin(1):
        assert np.abs(commutator(SWAP, j)).max() < 1e-12


def test_way_lower_bound_commuting_case():
    sz = spectral_decompose(spin_half_operators()[2])
    rho = random_density(2, 1)
    rho0 = random_density(3, 2)
    l2 = angular_momentum_operators(2)[0]
    assert way_lower_bound(sz.op, sz.op, l2, rho, rho0) == 0.0


def test_way_bound_numerator_capped_by_spin_algebra():
    # |<[S_z, S_x]>| = hbar |<S_y>| <= hbar^2 / 2, saturated by S_y eigenstates
    sx, sy, sz = spin_half_operators()
    psi_y = DensityState.pure([1.0, 1.0j])
    num = abs(np.trace(commutator(sz, sx) @ psi_y.op))
    assert num == pytest.approx(0.5, abs=1e-12)
    rng = np.random.default_rng(5)
    for _ in range(50):
        rho = random_density(2, rng)
        assert abs(np.trace(commutator(sz, sx) @ rho.op)) <= 0.5 + 1e-12


def test_way_bound_matches_spin_closed_form():
    hbar = 1.0
    sx, sy, sz = spin_half_operators(hbar)
    psi_y = DensityState.pure([1.0, 1.0j])
    l2 = angular_momentum_operators(2, hbar)[0]
    rho0 = random_density(3, 7)
    sigma2 = std_dev(l2, rho0.op)
    expected = hbar**4 / (4 * hbar**2 + 16 * sigma2**2)
    got = way_lower_bound(sz, sx, l2, psi_y, rho0)
    assert got == pytest.approx(expected, abs=1e-12)


def test_verify_way_on_covariant_processes():
    sz = spectral_decompose(spin_half_operators()[2])
    rng = np.random.default_rng(9)
    for n in (1, 2, 3):
        for _ in range(10):
            mp, l1, l2 = random_covariant_process(n, rng)
            rho = random_density(2, rng)
            res = verify_way(mp, sz, l1, l2, rho)
            assert res.conserved and res.yanase
            assert res.holds
            assert res.epsilon_sq >= res.bound - 1e-9


def test_swap_process_is_conserving():
    # the SWAP interaction with a meter built from the probe conserved
    # component passes both hypotheses of the WAY theorem
    mp_seed, _, l2 = random_covariant_process(1, seed=2)
    meter = conserving_meter(spin_half_operators()[0], seed=5)
    mp = type(mp_seed)(2, mp_seed.probe_state, SWAP, meter)
    sx, _, sz = spin_half_operators()
    res = verify_way(mp, spectral_decompose(sz), spectral_decompose(sx),
                     spectral_decompose(sx), random_density(2, 8))
    assert res.conserved and res.yanase and res.holds


def test_verify_way_reports_non_conserving_process():
    mp = random_measuring_process(2, 3, seed=33)
    sx, _, sz = spin_half_operators()
    l2 = spectral_decompose(angular_momentum_operators(2)[0])
    res = verify_way(mp, spectral_decompose(sz), spectral_decompose(sx), l2, random_density(2, 3))
    assert not res.conserved
    assert res.holds is None


def test_conserving_meter_commutes_exactly():
    l2 = angular_momentum_operators(3)[0]
    meter = conserving_meter(l2, seed=4)
    assert np.abs(commutator(meter.op, l2)).max() < 1e-12


def test_yanase_bound_arithmetic():
    assert yanase_bound(0.0) == pytest.approx(0.25, abs=1e-15)
    assert yanase_bound(0.5) == pytest.approx(0.125, abs=1e-15)
    assert yanase_error_probability(0.04, 1.0) == pytest.approx(0.04, abs=1e-15)
    with pytest.raises(ValueError):
        yanase_bound(-1.0)


def test_yanase_spin_bound_respected_by_sampled_maximum():
    sz = spectral_decompose(spin_half_operators()[2])
    psi_y = DensityState.pure([1.0, 1.0j])
    rng = np.random.default_rng(15)
    from qmtk.errdist import rms_noise
    for n in (0, 1, 2):
        mp, l1, l2 = random_covariant_process(n, rng)
        bound = yanase_bound(std_dev(l2.op, mp.probe_state.op))
        pe_at_maximizer = yanase_error_probability(rms_noise(mp, sz, psi_y, "direct") ** 2)
        assert pe_at_maximizer >= bound - 1e-9


def test_gate_target_roundtrip():
    rng = np.random.default_rng(2)
    for _ in range(100):
        u = haar_unitary(2, rng)
        t = GateTarget.from_matrix(u)
        assert np.abs(t.matrix - u).max() < 1e-10
        assert 0 <= t.theta <= np.pi + 1e-12
        rebuilt = GateTarget.from_angles(t.phi, t.theta, t.axis)
        assert np.abs(rebuilt.matrix - u).max() < 1e-10


def test_gate_target_validation():
    with pytest.raises(InvalidOperatorError):
        GateTarget.from_angles(0.0, np.pi / 2, [0, 0, 0])
    with pytest.raises(InvalidOperatorError):
        GateTarget.from_matrix(np.diag([1.0, 2.0]).astype(complex))
    with pytest.raises(ValueError):
        GateTarget.from_angles(0.0, 4.0, [0, 0, 1])


def test_gate_fidelity_perfect_implementation():
    rng = np.random.default_rng(6)
    for _ in range(20):
        t = GateTarget.from_matrix(haar_unitary(2, rng))
        f, _ = gate_fidelity(perfect_implementation(t), t)
        assert abs(f - 1.0) < 1e-10


def test_gate_fidelity_depolarizing_channel():
    ks = [np.zeros((2, 2), dtype=complex) for _ in range(4)]
    for i in range(2):
        for j in range(2):
            ks[2 * i + j][i, j] = 1 / np.sqrt(2)
    dep = implementation_from_kraus(ks)
    rho_out = dep.apply(np.array([[1, 0], [0, 0]], dtype=complex))
    assert np.abs(rho_out - np.eye(2) / 2).max() < 1e-12
    t = GateTarget.from_angles(0.2, np.pi / 3, [0, 1, 0])
    f, _ = gate_fidelity(dep, t)
    assert f * f == pytest.approx(0.5, abs=1e-8)
    # maximally entangled input certifies D >= 3/4 for the trace distance
    assert cb_distance_lower_bound(dep, t, n_starts=2) >= 0.75 - 1e-9


def test_gate_fidelity_matches_fine_grid_oracle():
    rng = np.random.default_rng(8)
    impl = random_covariant_implementation(2, rng)
    t = GateTarget.from_matrix(haar_unitary(2, rng))
    f, argmin = gate_fidelity(impl, t)
    # brute force on a 0.25 degree grid
    th = np.linspace(0, np.pi, 721)
    ph = np.linspace(0, 2 * np.pi, 1441, endpoint=False)
    tg, pg = np.meshgrid(th, ph, indexing="ij")
    psis = np.stack([np.cos(tg / 2), np.exp(1j * pg) * np.sin(tg / 2)], axis=-1).reshape(-1, 2)
    bs = [dagger(t.matrix) @ k for k in impl.channel_kraus()]
    vals = sum(np.abs(np.einsum("ni,ij,nj->n", psis.conj(), b, psis)) ** 2 for b in bs)
    assert f * f <= vals.min() + 1e-9
    assert f * f == pytest.approx(vals.min(), abs=1e-6)


def test_gate_infidelity_bound_arithmetic():
    assert gate_infidelity_bound(0.0, 3) == 0.0
    assert gate_infidelity_bound(np.pi / 2, 1) == pytest.approx(1 / 8, abs=1e-15)
    assert gate_infidelity_bound(np.pi, 2) == pytest.approx(1 / 20, abs=1e-15)
    with pytest.raises(ValueError):
        gate_infidelity_bound(4.0, 1)
    with pytest.raises(ValueError):
        gate_infidelity_bound(1.0, -1)


def test_covariant_implementations_respect_infidelity_bound():
    rng = np.random.default_rng(12)
    for n in (0, 1, 2):
        for theta in (np.pi / 4, np.pi / 2, np.pi):
            impl = random_covariant_implementation(n, rng)
            t = GateTarget.from_angles(rng.uniform(0, 2 * np.pi), theta, rng.standard_normal(3))
            f, worst = gate_fidelity(impl, t)
            infid = 1 - f * f
            assert infid >= gate_infidelity_bound(theta, n) - 1e-9
            dcb = cb_distance_lower_bound(impl, t, n_starts=3, worst_state=worst)
            assert infid <= dcb + 1e-6
            assert dcb <= 1 + 1e-12


def test_cb_distance_monotone_in_starts_and_zero_for_perfect():
    t = GateTarget.from_angles(1.0, np.pi / 2, [1, 1, 0])
    perfect = perfect_implementation(t)
    assert cb_distance_lower_bound(perfect, t, n_starts=2) < 1e-9
    rng = np.random.default_rng(3)
    impl = random_covariant_implementation(1, rng)
    vals = [cb_distance_lower_bound(impl, t, n_starts=k, seed=7) for k in (1, 2, 4, 6)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_implementation_validation():
    with pytest.raises(InvalidOperatorError):
        Implementation(1, np.diag([1.0, 2.0]).astype(complex), np.array([1.0]))
    from qmtk.linops import InvalidStateError
    with pytest.raises(InvalidStateError):
        Implementation(1, np.eye(2, dtype=complex), np.array([2.0]))


def test_hbar_scaling_of_spin_bounds():
    hbar = 2.0
    sx, sy, sz = spin_half_operators(hbar)
    psi_y = DensityState.pure([1.0, 1.0j])
    l2 = angular_momentum_operators(2, hbar)[0]
    rho0 = random_density(3, 5)
    bound = way_lower_bound(sz, sx, l2, psi_y, rho0)
    expected = hbar**4 / (4 * hbar**2 + 16 * std_dev(l2, rho0.op) ** 2)
    assert bound == pytest.approx(expected, abs=1e-12)
    # the dimensionless error probability keeps the same floor
    assert yanase_bound(std_dev(l2, rho0.op), hbar) == pytest.approx(
        1 / (4 + 16 * (std_dev(l2, rho0.op) / hbar) ** 2), abs=1e-15)
