"""Conservation-law limits on measurement and gate accuracy.

Additive conserved quantities bound how well a non-commuting observable can
be measured (``way_lower_bound``, ``verify_way``) and how faithfully a qubit
gate can be implemented by an interaction respecting the conservation law
(``gate_fidelity``, ``gate_infidelity_bound``). Exact diamond-norm evaluation
is out of scope; ``cb_distance_lower_bound`` certifies a lower bound on the
completely bounded distance by optimizing the trace distance over pure
entangled inputs with a single ancilla qubit, which suffices for the
infidelity cross-check 1 - F^2 <= D_CB.

Spin convention: S_k = (hbar/2) sigma_k on the qubit, standard (N+1)-dim
angular momentum matrices for the spin-N/2 ancilla.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errdist import rms_noise
from .instruments import MeasuringProcess, unitary_completion
from .linops import (
    HERM_TOL,
    InvalidOperatorError,
    InvalidStateError,
    Observable,
    ShapeError,
    _as_matrix,
    _readonly,
    as_operator,
    commutator,
    dagger,
    is_unitary,
    spectral_decompose,
    std_dev,
    tensor,
)
from .models import _distinct_values, _rng, random_pure_state

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (PAULI_X, PAULI_Y, PAULI_Z)

RELATION_TOL = 1e-9
COMMUTANT_NULL_TOL = 1e-10


def spin_half_operators(hbar: float = 1.0):
    """(S_x, S_y, S_z) = (hbar/2) (sigma_x, sigma_y, sigma_z)."""
    return tuple(hbar / 2 * s for s in PAULIS)


def angular_momentum_operators(n: int, hbar: float = 1.0):
    """(L_x, L_y, L_z) for spin N/2 on C^(N+1)."""
    if n < 0:
        raise ValueError("spin quantum number N must be >= 0")
    j = n / 2
    dim = n + 1
    m = j - np.arange(dim)
    lz = hbar * np.diag(m).astype(complex)
    lp = np.zeros((dim, dim), dtype=complex)
    for i in range(1, dim):
        lp[i - 1, i] = hbar * math.sqrt(j * (j + 1) - m[i] * (m[i] + 1))
    lx = (lp + dagger(lp)) / 2
    ly = (lp - dagger(lp)) / 2j
    return lx, ly, lz


def commutant_hermitian_basis(ops, null_tol: float = COMMUTANT_NULL_TOL):
    """Orthonormal Hermitian basis of {X : [X, O] = 0 for all O in ops}.

    The commutant is the joint nullspace of the vectorized commutator maps
    X -> [X, O], found by SVD.
    """
    ops = [as_operator(o) for o in ops]
    d = ops[0].shape[0]
    eye = np.eye(d)
    rows = np.vstack([np.kron(o.T, eye) - np.kron(eye, o) for o in ops])
    _, s, vh = np.linalg.svd(rows)
    null_vecs = [vh[i] for i in range(vh.shape[0]) if i >= s.size or s[i] < null_tol]
    basis = []
    for nv in null_vecs:
        x = nv.reshape(d, d, order="F")
        for cand in ((x + dagger(x)) / 2, (x - dagger(x)) / 2j):
            for g in basis:
                cand = cand - np.trace(dagger(g) @ cand) * g
            nrm = np.linalg.norm(cand)
            if nrm > 1e-8:
                basis.append(cand / nrm)
    return basis


def covariant_unitary(ancilla_spin_n: int, seed, object_dim: int = 2, hbar: float = 1.0) -> np.ndarray:
    """Random unitary on C^2 (x) C^(N+1) commuting with all total-spin components.

    Draws a seeded Hermitian combination G from the commutant of
    {J_x, J_y, J_z} and returns exp(iG).
    """
    if object_dim != 2:
        raise ShapeError("covariant unitaries are built for a qubit object")
    s_ops = spin_half_operators(hbar)
    l_ops = angular_momentum_operators(ancilla_spin_n, hbar)
    dim_a = ancilla_spin_n + 1
    j_ops = [tensor(s, np.eye(dim_a)) + tensor(np.eye(2), l) for s, l in zip(s_ops, l_ops)]
    basis = commutant_hermitian_basis(j_ops)
    rng = _rng(seed)
    coeff = rng.standard_normal(len(basis))
    g = sum(c * b for c, b in zip(coeff, basis))
    w, v = np.linalg.eigh(g)
    return (v * np.exp(1j * w)) @ dagger(v)


def conserving_meter(l2: np.ndarray, seed) -> Observable:
    """Random meter commuting with the probe part of the conserved quantity.

    Built block-diagonally in the eigenbasis of L2, so [M, L2] = 0 holds by
    construction rather than within a tolerance.
    """
    l2 = as_operator(l2)
    obs = spectral_decompose(l2)
    rng = _rng(seed)
    dim = l2.shape[0]
    m = np.zeros((dim, dim), dtype=complex)
    for _, proj in obs.spectrum:
        w, v = np.linalg.eigh(proj)
        cols = v[:, w > 0.5]
        r = cols.shape[1]
        g = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
        h = (g + dagger(g)) / 2
        m += cols @ h @ dagger(cols)
    # spread eigenvalues so the meter outcomes are distinct
    vals = _distinct_values(dim, rng)
    w, v = np.linalg.eigh(m)
    m = (v * vals) @ dagger(v)
    return spectral_decompose(m)


def random_covariant_process(ancilla_spin_n: int, seed, hbar: float = 1.0):
    """Covariant measuring process with a Yanase-condition meter.

    Returns (process, L1 observable on the object, L2 observable on the
    probe) with the conserved pair fixed to the x spin components.
    """
    rng = _rng(seed)
    u = covariant_unitary(ancilla_spin_n, rng, hbar=hbar)
    dim_a = ancilla_spin_n + 1
    probe = random_pure_state(dim_a, rng)
    l1 = spectral_decompose(spin_half_operators(hbar)[0])
    l2_mat = angular_momentum_operators(ancilla_spin_n, hbar)[0]
    meter = conserving_meter(l2_mat, rng)
    mp = MeasuringProcess(dim_a, probe, u, meter)
    return mp, l1, spectral_decompose(l2_mat)


# ---------------------------------------------------------------------------
# quantitative WAY theorem and the Yanase spin bound
# ---------------------------------------------------------------------------

def way_lower_bound(a, l1, l2, rho, rho0) -> float:
    """|<[A, L1]>_rho|^2 / (4 sigma(L1|rho)^2 + 4 sigma(L2|rho0)^2)."""
    a_m, l1_m, l2_m = _as_matrix(a), _as_matrix(l1), _as_matrix(l2)
    r, r0 = _as_matrix(rho), _as_matrix(rho0)
    num = abs(complex(np.trace(commutator(a_m, l1_m) @ r))) ** 2
    den = 4 * std_dev(l1_m, r) ** 2 + 4 * std_dev(l2_m, r0) ** 2
    if den <= 1e-24:
        if num <= 1e-18:
            warnings.warn("WAY bound is vacuous: commutator mean and variances all vanish")
            return 0.0
        return math.inf
    return num / den


@dataclass(frozen=True)
class WayVerification:
    epsilon_sq: float
    bound: float
    conserved: bool
    yanase: bool
    holds: bool | None  # None when the theorem's hypotheses fail


def verify_way(mp: MeasuringProcess, a: Observable, l1: Observable, l2: Observable,
               rho) -> WayVerification:
    """Check the hypotheses and conclusion of the quantitative WAY theorem.

    ``conserved`` probes [U, L1 (x) 1 + 1 (x) L2] = 0 and ``yanase`` probes
    [M, L2] = 0; when both hold the noise bound is asserted. Non-conserving
    processes are reported, not rejected.
    """
    total = tensor(l1.op, np.eye(mp.probe_dim)) + tensor(np.eye(mp.system_dim), l2.op)
    conserved = bool(np.abs(commutator(mp.unitary, total)).max() <= HERM_TOL)
    yanase = bool(np.abs(commutator(mp.meter.op, l2.op)).max() <= HERM_TOL)
    eps_sq = rms_noise(mp, a, rho, method="direct") ** 2
    bound = way_lower_bound(a.op, l1.op, l2.op, rho, mp.probe_state.op)
    holds = bool(eps_sq >= bound - RELATION_TOL) if (conserved and yanase) else None
    return WayVerification(eps_sq, bound, conserved, yanase, holds)


def yanase_error_probability(epsilon_sq: float, hbar: float = 1.0) -> float:
    """Spin-measurement error probability P_e = eps(S_z)^2 / hbar^2."""
    if epsilon_sq < 0 or hbar <= 0:
        raise ValueError("epsilon_sq must be >= 0 and hbar > 0")
    return epsilon_sq / hbar**2


def yanase_bound(sigma_l2: float, hbar: float = 1.0) -> float:
    """Lower bound 1 / (4 + 16 (sigma(L2)/hbar)^2) on the worst-case P_e."""
    if sigma_l2 < 0 or hbar <= 0:
        raise ValueError("sigma_l2 must be >= 0 and hbar > 0")
    return 1.0 / (4.0 + 16.0 * (sigma_l2 / hbar) ** 2)


# ---------------------------------------------------------------------------
# gate targets and implementations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GateTarget:
    """Qubit gate in angle form: e^(i phi) (cos(theta/2) 1 + i sin(theta/2) n.sigma)."""

    phi: float
    theta: float
    axis: tuple
    matrix: np.ndarray

    def __post_init__(self):
        ax = np.asarray(self.axis, dtype=float)
        if ax.shape != (3,) or abs(np.linalg.norm(ax) - 1.0) > 1e-12:
            raise InvalidOperatorError("gate axis must be a unit 3-vector")
        if not (0 <= self.theta <= np.pi + 1e-12):
            raise ValueError("theta must lie in [0, pi]")
        m = as_operator(self.matrix)
        rebuilt = _gate_matrix(self.phi, self.theta, ax)
        if np.abs(m - rebuilt).max() > HERM_TOL:
            raise InvalidOperatorError("gate matrix does not match its angle form")
        object.__setattr__(self, "phi", float(self.phi) % (2 * np.pi))
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "axis", tuple(float(c) for c in ax))
        object.__setattr__(self, "matrix", _readonly(m))

    @classmethod
    def from_angles(cls, phi: float, theta: float, axis) -> "GateTarget":
        ax = np.asarray(axis, dtype=float)
        nrm = np.linalg.norm(ax)
        if nrm < 1e-12:
            raise InvalidOperatorError("gate axis must be nonzero")
        ax = ax / nrm
        return cls(phi % (2 * np.pi), theta, tuple(ax), _gate_matrix(phi, theta, ax))

    @classmethod
    def from_matrix(cls, u) -> "GateTarget":
        u = as_operator(u)
        if u.shape != (2, 2) or not is_unitary(u, HERM_TOL):
            raise InvalidOperatorError("gate must be a 2x2 unitary")
        det = u[0, 0] * u[1, 1] - u[0, 1] * u[1, 0]
        phi = 0.5 * np.angle(det)
        c = (np.trace(u) * np.exp(-1j * phi) / 2).real
        if c < 0:
            phi += np.pi
            c = -c
        theta = 2 * np.arccos(min(max(c, 0.0), 1.0))
        s = np.sin(theta / 2)
        if s > 1e-7:
            ax = np.array([(np.trace(p @ u) * np.exp(-1j * phi) / (2j * s)).real for p in PAULIS])
            ax = ax / np.linalg.norm(ax)
        else:
            ax = np.array([0.0, 0.0, 1.0])
        return cls(phi % (2 * np.pi), float(theta), tuple(ax), _gate_matrix(phi, theta, ax))


def _gate_matrix(phi: float, theta: float, axis) -> np.ndarray:
    n_dot_sigma = sum(c * p for c, p in zip(axis, PAULIS))
    return np.exp(1j * phi) * (np.cos(theta / 2) * np.eye(2) + 1j * np.sin(theta / 2) * n_dot_sigma)


@dataclass(frozen=True)
class Implementation:
    """Ancilla-assisted realization of a qubit gate: a pair (U, |xi>)."""

    ancilla_dim: int
    unitary: np.ndarray
    ancilla_state: np.ndarray

    def __post_init__(self):
        u = as_operator(self.unitary)
        if not is_unitary(u, HERM_TOL):
            raise InvalidOperatorError("implementation interaction is not unitary")
        xi = np.asarray(self.ancilla_state, dtype=complex).ravel()
        if xi.size != self.ancilla_dim or u.shape[0] != 2 * self.ancilla_dim:
            raise ShapeError("unitary must act on C^2 (x) C^(ancilla_dim)")
        if abs(np.linalg.norm(xi) - 1.0) > 1e-9:
            raise InvalidStateError("ancilla state is not normalized")
        object.__setattr__(self, "ancilla_dim", int(self.ancilla_dim))
        object.__setattr__(self, "unitary", _readonly(u))
        xi = xi.copy()
        xi.setflags(write=False)
        object.__setattr__(self, "ancilla_state", xi)

    def channel_kraus(self):
        """Kraus operators A_k = (1 (x) <k|) U (1 (x) |xi>) of E_alpha."""
        da = self.ancilla_dim
        u4 = self.unitary.reshape(2, da, 2, da)
        ue = np.tensordot(u4, self.ancilla_state, axes=([3], [0]))  # (2, da, 2)
        return [ue[:, k, :] for k in range(da)]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros((2, 2), dtype=complex)
        for k in self.channel_kraus():
            out += k @ rho @ dagger(k)
        return out


def perfect_implementation(target: GateTarget) -> Implementation:
    return Implementation(1, target.matrix.copy(), np.array([1.0 + 0j]))


def implementation_from_kraus(kraus) -> Implementation:
    """Dilate a qubit channel given in Kraus form to an Implementation."""
    ks = [as_operator(k) for k in kraus]
    m = len(ks)
    iso = np.zeros((2 * m, 2), dtype=complex)
    for c, k in enumerate(ks):
        for a in range(2):
            iso[a * m + c, :] += k[a, :]
    u = unitary_completion({j * m: iso[:, j] for j in range(2)}, 2 * m)
    xi = np.zeros(m, dtype=complex)
    xi[0] = 1.0
    return Implementation(m, u, xi)


def random_covariant_implementation(ancilla_spin_n: int, seed, hbar: float = 1.0) -> Implementation:
    """Covariant interaction with a random pure ancilla state."""
    rng = _rng(seed)
    u = covariant_unitary(ancilla_spin_n, rng, hbar=hbar)
    xi = rng.standard_normal(ancilla_spin_n + 1) + 1j * rng.standard_normal(ancilla_spin_n + 1)
    return Implementation(ancilla_spin_n + 1, u, xi / np.linalg.norm(xi))


# ---------------------------------------------------------------------------
# gate fidelity, CB-distance lower bound, infidelity bounds
# ---------------------------------------------------------------------------

def _bloch_state(theta: float, phi: float) -> np.ndarray:
    return np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])


def gate_fidelity(impl: Implementation, target: GateTarget, grid_deg: float = 2.0):
    """Worst-case pure-state fidelity F = inf_psi <psi|U^dag E(psi) U|psi>^(1/2).

    F^2 restricted to the Bloch sphere is a quadratic form in the Bloch
    vector, minimized by a coarse grid scan (``grid_deg`` spacing) followed
    by Nelder-Mead refinement from the best grid cells.

    Returns (F, argmin state vector).
    """
    bs = [dagger(target.matrix) @ k for k in impl.channel_kraus()]
    betas = np.array([np.trace(b) for b in bs])
    ts = np.array([[np.trace(b @ p) for p in PAULIS] for b in bs])
    const = 0.25 * float(np.sum(np.abs(betas) ** 2))
    lin = 0.5 * np.real(np.conj(betas)[:, None] * ts).sum(axis=0)
    quad = 0.25 * np.real(np.einsum("ka,kb->ab", ts.conj(), ts))

    def f2_of_angles(u):
        th, ph = u
        r = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
        return const + lin @ r + r @ quad @ r

    step = np.deg2rad(grid_deg)
    th = np.arange(0.0, np.pi + step / 2, step)
    ph = np.arange(0.0, 2 * np.pi, step)
    tg, pg = np.meshgrid(th, ph, indexing="ij")
    rr = np.stack([np.sin(tg) * np.cos(pg), np.sin(tg) * np.sin(pg), np.cos(tg)], axis=-1)
    rr = rr.reshape(-1, 3)
    vals = const + rr @ lin + np.einsum("na,ab,nb->n", rr, quad, rr)
    best = float(vals.min())
    best_u = None
    for i in np.argsort(vals)[:3]:
        res = minimize(f2_of_angles, x0=[tg.reshape(-1)[i], pg.reshape(-1)[i]],
                       method="Nelder-Mead",
                       options={"xatol": 1e-9, "fatol": 1e-13, "maxiter": 2000})
        if res.fun < best:
            best = float(res.fun)
            best_u = res.x
    if best_u is None:
        i0 = int(np.argmin(vals))
        best_u = [tg.reshape(-1)[i0], pg.reshape(-1)[i0]]
    f = math.sqrt(min(max(best, 0.0), 1.0))
    return f, _bloch_state(best_u[0], best_u[1])


def cb_distance_lower_bound(impl: Implementation, target: GateTarget, n_starts: int = 8,
                            seed: int = 0, worst_state: np.ndarray | None = None) -> float:
    """Certified lower bound on the completely bounded (diamond) distance.

    Maximizes D((E (x) id)(psi), (adU (x) id)(psi)) over pure two-qubit
    inputs by multi-start local search. The first two starts are the
    maximally entangled state and the worst-fidelity product state (the
    latter passed in as ``worst_state`` if already known), so the result is
    monotone in ``n_starts`` and always dominates 1 - F^2 up to optimizer
    slack.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    eye2 = np.eye(2)
    ks_ext = [tensor(k, eye2) for k in impl.channel_kraus()]
    u_ext = tensor(target.matrix, eye2)

    def distance_at(v: np.ndarray) -> float:
        rho = np.outer(v, v.conj())
        diff = -(u_ext @ rho @ dagger(u_ext))
        for k in ks_ext:
            diff += k @ rho @ dagger(k)
        return 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())

    def objective(x):
        v = x[:4] + 1j * x[4:]
        nrm = np.linalg.norm(v)
        if nrm < 1e-9:
            return 0.0
        return -distance_at(v / nrm)

    starts = [np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)]
    if worst_state is None:
        _, worst_state = gate_fidelity(impl, target)
    starts.append(np.kron(worst_state, np.array([1.0, 0.0])))
    rng = _rng(seed)
    while len(starts) < n_starts:
        v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        starts.append(v / np.linalg.norm(v))
    best = 0.0
    for s in starts[:n_starts]:
        x0 = np.concatenate([s.real, s.imag])
        best = max(best, distance_at(s))
        res = minimize(objective, x0=x0, method="Nelder-Mead",
                       options={"xatol": 1e-7, "fatol": 1e-10, "maxiter": 900})
        best = max(best, -float(res.fun))
    return min(best, 1.0 + 1e-15)


def gate_infidelity_bound(theta: float, n: int) -> float:
    """Covariant-implementation infidelity floor for a theta gate, spin-N/2 ancilla."""
    if not (0 <= theta <= np.pi + 1e-12):
        raise ValueError("theta must lie in [0, pi]")
    if n < 0:
        raise ValueError("N must be >= 0")
    den = 4.0 + 4.0 * n * n
    if theta <= np.pi / 2:
        return float(np.sin(theta) ** 2 / den)
    return 1.0 / den
