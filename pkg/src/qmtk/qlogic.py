"""Projection-lattice quantum logic and state-dependent joint measurability.

Truth values of observational propositions are projections: atoms map to
spectral projections, connectives to lattice meet/join/orthocomplement, and
implication to the Sasaki arrow a -> b = a^perp v (a ^ b). The equality atom
A = B gets the projection onto the largest subspace, invariant under both
observables, on which they coincide; a state assigns it probability 1
exactly when the observables are identically correlated in that state.

Simultaneous measurability in a state is decided through the existence of a
joint POVM whose marginals are sharp on the minimal invariant subspaces
C(A, rho) and C(B, rho); that existence question is a semidefinite
feasibility problem, solved here as a least-squares over the PSD cone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linops import (
    HERM_TOL,
    TRACE_TOL,
    VALUE_MATCH_TOL,
    InvalidOperatorError,
    Observable,
    QmtkError,
    ShapeError,
    _as_matrix,
    _readonly,
    as_operator,
    commutator,
    dagger,
)

MEET_EIG_TOL = 1e-9           # nullspace threshold for the lattice meet
COMMUTE_IN_STATE_TOL = 1e-10  # || [P_i, Q_j] rho ||_F threshold
SUBSPACE_RANK_TOL = 1e-10
FEASIBLE_RESIDUAL = 1e-8
INFEASIBLE_RESIDUAL = 1e-4


class UndefinedJointDistributionError(QmtkError):
    """Joint distribution requested for observables not commuting in the state."""


@dataclass(frozen=True)
class Projection:
    """Hermitian idempotent operator."""

    op: np.ndarray

    def __post_init__(self):
        p = as_operator(self.op)
        if np.abs(p - dagger(p)).max() > HERM_TOL or np.abs(p @ p - p).max() > HERM_TOL:
            raise InvalidOperatorError("not a projection (Hermitian idempotent)")
        object.__setattr__(self, "op", _readonly(p))

    @property
    def dim(self) -> int:
        return self.op.shape[0]

    @property
    def rank(self) -> int:
        return int(round(np.trace(self.op).real))


def _proj_from_basis(v: np.ndarray, dim: int) -> Projection:
    if v.size == 0:
        return Projection(np.zeros((dim, dim), dtype=complex))
    p = v @ dagger(v)
    return Projection((p + dagger(p)) / 2)


def _nullspace_projection(h: np.ndarray, tol: float) -> Projection:
    w, v = np.linalg.eigh(h)
    cols = v[:, np.abs(w) <= tol]
    return _proj_from_basis(cols, h.shape[0])


def meet(p: Projection, q: Projection) -> Projection:
    """Projection onto range(P) intersect range(Q).

    The intersection is exactly the kernel of (2 - P - Q), both summands
    being positive.
    """
    if p.dim != q.dim:
        raise ShapeError("projections must share a dimension")
    return _nullspace_projection(2 * np.eye(p.dim) - p.op - q.op, MEET_EIG_TOL)


def complement(p: Projection) -> Projection:
    return Projection(np.eye(p.dim) - p.op)


def join(p: Projection, q: Projection) -> Projection:
    return complement(meet(complement(p), complement(q)))


def sasaki_arrow(p: Projection, q: Projection) -> Projection:
    """a -> b = a^perp v (a ^ b)."""
    return join(complement(p), meet(p, q))


@dataclass(frozen=True)
class LatticeOps:
    meet: Projection
    join: Projection
    complement_of_p: Projection
    sasaki: Projection


def lattice_ops(p: Projection, q: Projection) -> LatticeOps:
    return LatticeOps(meet(p, q), join(p, q), complement(p), sasaki_arrow(p, q))


# ---------------------------------------------------------------------------
# observational propositions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    observable: Observable
    subset: object  # RealSet or iterable of reals


@dataclass(frozen=True)
class Equal:
    a: Observable
    b: Observable


@dataclass(frozen=True)
class Not:
    inner: object


@dataclass(frozen=True)
class And:
    left: object
    right: object


@dataclass(frozen=True)
class Or:
    left: object
    right: object


@dataclass(frozen=True)
class Implies:
    left: object
    right: object


def truth_value(prop) -> Projection:
    """The projection-valued truth value of an observational proposition."""
    if isinstance(prop, Atom):
        return Projection(prop.observable.projection_for(prop.subset))
    if isinstance(prop, Equal):
        return identical_correlation_projection(prop.a, prop.b)
    if isinstance(prop, Not):
        return complement(truth_value(prop.inner))
    if isinstance(prop, And):
        return meet(truth_value(prop.left), truth_value(prop.right))
    if isinstance(prop, Or):
        return join(truth_value(prop.left), truth_value(prop.right))
    if isinstance(prop, Implies):
        return sasaki_arrow(truth_value(prop.left), truth_value(prop.right))
    raise TypeError(f"not a proposition: {prop!r}")


def proposition_probability(prop, rho) -> float:
    """Extended Born formula Tr[ [[phi]] rho ]."""
    r = _as_matrix(rho)
    p = truth_value(prop)
    if p.dim != r.shape[0]:
        raise ShapeError("state and proposition dimensions differ")
    return min(max(float(np.trace(p.op @ r).real), 0.0), 1.0)


def parse_proposition(data: dict, operators: dict):
    """Deserialize the JSON proposition grammar against a named-operator table.

    Grammar: {"atom": {"obs": name, "set": [v, ...]}} or
    {"atom": {"obs": name, "interval": [lo, hi]}}, {"eq": [nameA, nameB]},
    {"not": p}, {"and": [p, ...]}, {"or": [p, ...]}, {"implies": [p1, p2]}.
    """
    from .instruments import RealSet

    if not isinstance(data, dict) or len(data) != 1:
        raise ValueError(f"malformed proposition node: {data!r}")
    key, body = next(iter(data.items()))
    if key == "atom":
        obs = operators[body["obs"]]
        if "interval" in body:
            lo, hi = body["interval"]
            subset = RealSet.interval(lo, hi)
        else:
            subset = RealSet.of(*body["set"])
        return Atom(obs, subset)
    if key == "eq":
        return Equal(operators[body[0]], operators[body[1]])
    if key == "not":
        return Not(parse_proposition(body, operators))
    if key in ("and", "or"):
        cls = And if key == "and" else Or
        parts = [parse_proposition(p, operators) for p in body]
        if not parts:
            raise ValueError(f"empty {key!r} proposition")
        node = parts[0]
        for p in parts[1:]:
            node = cls(node, p)
        return node
    if key == "implies":
        return Implies(parse_proposition(body[0], operators), parse_proposition(body[1], operators))
    raise ValueError(f"unknown proposition connective {key!r}")


# ---------------------------------------------------------------------------
# joint distributions and identical correlation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JointDistribution:
    commuting_in_rho: bool
    _table: Optional[dict] = field(default=None, repr=False)

    @property
    def distribution(self) -> dict:
        if not self.commuting_in_rho or self._table is None:
            raise UndefinedJointDistributionError(
                "observables do not commute in the state; no joint distribution exists"
            )
        return dict(self._table)


def joint_distribution(a: Observable, b: Observable, rho) -> JointDistribution:
    """Commutation-in-state test and (if defined) the joint distribution.

    A and B commute in rho when [P_i, Q_j] rho = 0 for all spectral
    projections (Frobenius norm below COMMUTE_IN_STATE_TOL); then
    mu(a_i, b_j) = Tr[P_i Q_j rho].
    """
    if a.dim != b.dim:
        raise ShapeError("observables must share a dimension")
    r = _as_matrix(rho)
    for _, p in a.spectrum:
        for _, q in b.spectrum:
            if np.linalg.norm(commutator(p, q) @ r) > COMMUTE_IN_STATE_TOL:
                return JointDistribution(False)
    table = {}
    total = 0.0
    for av, p in a.spectrum:
        for bv, q in b.spectrum:
            prob = float(np.trace(p @ q @ r).real)
            prob = min(max(prob, 0.0), 1.0)
            table[(av, bv)] = prob
            total += prob
    if abs(total - 1.0) > 10 * TRACE_TOL:
        raise InvalidOperatorError(f"joint distribution sums to {total}, not 1")
    return JointDistribution(True, table)


def identical_correlation(a: Observable, b: Observable, rho) -> bool:
    """A and B commute in rho and their joint distribution sits on the diagonal."""
    jd = joint_distribution(a, b, rho)
    if not jd.commuting_in_rho:
        return False
    diag = sum(p for (av, bv), p in jd.distribution.items() if abs(av - bv) <= VALUE_MATCH_TOL)
    return bool(abs(diag - 1.0) <= 10 * TRACE_TOL)


def _orthonormalize(m: np.ndarray, tol: float = SUBSPACE_RANK_TOL) -> np.ndarray:
    if m.size == 0:
        return m.reshape(m.shape[0], 0)
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return m[:, :0]
    return u[:, s > tol * s[0]]


def identical_correlation_projection(a: Observable, b: Observable) -> Projection:
    """[[A = B]]: the largest A,B-invariant subspace inside ker(A - B).

    Fixed point of M_{k+1} = { psi in M_k : A psi, B psi in M_k } starting
    from M_0 = ker(A - B). States supported there, and only those, exhibit
    identical correlation of A and B.
    """
    if a.dim != b.dim:
        raise ShapeError("observables must share a dimension")
    d = a.dim
    diff = a.op - b.op
    scale = max(1.0, float(np.linalg.norm(diff, 2)))
    w, v = np.linalg.eigh(diff)
    basis = v[:, np.abs(w) <= SUBSPACE_RANK_TOL * scale]
    while basis.shape[1]:
        p_here = basis @ dagger(basis)
        leak = np.vstack([
            (a.op @ basis) - p_here @ (a.op @ basis),
            (b.op @ basis) - p_here @ (b.op @ basis),
        ])
        _, s, vh = np.linalg.svd(leak)
        coeff = [vh[i] for i in range(vh.shape[0]) if i >= s.size or s[i] <= SUBSPACE_RANK_TOL * scale]
        if len(coeff) == basis.shape[1]:
            break
        if not coeff:
            basis = basis[:, :0]
            break
        basis = _orthonormalize(basis @ np.array(coeff).T)
    return _proj_from_basis(basis, d)


def min_invariant_subspace(a: Observable, b: Optional[Observable], rho) -> Projection:
    """C(A, B, rho): smallest A,B-invariant subspace containing range(rho)."""
    r = _as_matrix(rho)
    d = a.dim
    if r.shape[0] != d or (b is not None and b.dim != d):
        raise ShapeError("dimension mismatch")
    w, v = np.linalg.eigh(r)
    basis = v[:, w > 1e-12]
    ops = [a.op] + ([b.op] if b is not None else [])
    while True:
        blocks = [basis] + [op @ basis for op in ops]
        grown = _orthonormalize(np.hstack(blocks))
        if grown.shape[1] == basis.shape[1]:
            return _proj_from_basis(grown, d)
        basis = grown


# ---------------------------------------------------------------------------
# simultaneous measurability
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimultaneityResult:
    flag: Optional[bool]  # None = undecided
    certificate: dict


def _globally_commuting(a: Observable, b: Observable) -> bool:
    return all(
        np.abs(commutator(p, q)).max() <= HERM_TOL
        for _, p in a.spectrum
        for _, q in b.spectrum
    )


def _check_witness(witness, a: Observable, b: Observable, rho, ca, cb) -> SimultaneityResult:
    d = a.dim
    entries = [((float(x), float(y)), as_operator(e)) for (x, y), e in witness]
    total = sum(e for _, e in entries)
    if np.abs(total - np.eye(d)).max() > HERM_TOL:
        return SimultaneityResult(False, {"kind": "witness", "reason": "witness is not normalized"})
    for _, e in entries:
        if np.linalg.eigvalsh((e + dagger(e)) / 2).min() < -HERM_TOL:
            return SimultaneityResult(False, {"kind": "witness", "reason": "witness effect not PSD"})
    r = _as_matrix(rho)
    worst = 0.0
    for axis, obs, comp in ((0, a, ca), (1, b, cb)):
        labels = sorted({lab[axis] for lab, _ in entries})
        for lab in labels:
            marg = sum(e for (xy, e) in entries if xy[axis] == lab)
            hit = [p for v, p in obs.spectrum if abs(v - lab) <= VALUE_MATCH_TOL]
            target = hit[0] if hit else np.zeros((d, d), dtype=complex)
            worst = max(worst, float(np.abs(marg @ comp - target @ comp).max()))
            # disjoint-support condition in the state
            for v, p in obs.spectrum:
                if abs(v - lab) > VALUE_MATCH_TOL:
                    worst = max(worst, abs(float(np.trace(marg @ p @ r).real)))
    ok = worst <= 1e-10
    return SimultaneityResult(bool(ok), {"kind": "witness", "max_violation": worst})


def _joint_povm_search(a: Observable, b: Observable, ca: np.ndarray, cb: np.ndarray):
    """Least-squares feasibility for a joint POVM with sharp compressed marginals."""
    import cvxpy as cp

    d = a.dim
    na, nb = len(a.eigenvalues), len(b.eigenvalues)
    pis = [[cp.Variable((d, d), hermitian=True) for _ in range(nb + 1)] for _ in range(na + 1)]
    constraints = [x >> 0 for row in pis for x in row]
    constraints.append(sum(x for row in pis for x in row) == np.eye(d))
    resid = 0
    for i in range(na + 1):
        row = sum(pis[i])
        target = a.projections[i] @ ca if i < na else np.zeros((d, d))
        resid = resid + cp.sum_squares(row @ ca - target)
    for j in range(nb + 1):
        col = sum(pis[i][j] for i in range(na + 1))
        target = b.projections[j] @ cb if j < nb else np.zeros((d, d))
        resid = resid + cp.sum_squares(col @ cb - target)
    problem = cp.Problem(cp.Minimize(resid), constraints)
    try:
        problem.solve(solver=cp.CLARABEL)
    except (cp.SolverError, Exception):
        problem.solve(solver=cp.SCS, eps=1e-9, max_iters=200_000)
    value = problem.value
    povm = None
    if value is not None and value <= FEASIBLE_RESIDUAL:
        povm = []
        for i in range(na + 1):
            for j in range(nb + 1):
                eff = np.array(pis[i][j].value)
                if np.trace(eff).real > 1e-9:
                    lab = (
                        a.eigenvalues[i] if i < na else None,
                        b.eigenvalues[j] if j < nb else None,
                    )
                    povm.append((lab, eff))
    return problem.status, value, povm


def is_simultaneously_measurable(a: Observable, b: Observable, rho,
                                 witness=None) -> SimultaneityResult:
    """Decide simultaneous measurability of A and B in the state rho.

    With a witness (an iterable of ((x, y), effect) joint-POVM entries) the
    marginal conditions compressed by C(A, rho), C(B, rho) and the
    disjoint-support conditions are checked directly. Without one, the
    decision reduces to joint-POVM feasibility: globally commuting pairs
    are certified by their joint spectral measure; two sharp non-commuting
    marginals forced on the full space are refuted outright; the remaining
    cases go to the PSD least-squares search, reporting ``flag=None`` when
    the residual is numerically inconclusive.
    """
    if a.dim != b.dim:
        raise ShapeError("observables must share a dimension")
    ca = min_invariant_subspace(a, None, rho).op
    cb = min_invariant_subspace(b, None, rho).op
    if witness is not None:
        return _check_witness(witness, a, b, rho, ca, cb)
    if _globally_commuting(a, b):
        cert = [((av, bv), p @ q) for av, p in a.spectrum for bv, q in b.spectrum]
        return SimultaneityResult(True, {"kind": "joint-spectral-measure", "povm": cert})
    d = a.dim
    full_a = np.abs(ca - np.eye(d)).max() <= HERM_TOL
    full_b = np.abs(cb - np.eye(d)).max() <= HERM_TOL
    if full_a and full_b:
        # Both marginals would have to be the (non-commuting) sharp spectral
        # measures on all of H; a joint POVM with projective marginals forces
        # them to commute, so none exists.
        return SimultaneityResult(False, {
            "kind": "sharp-marginal-obstruction",
            "reason": "C(A,rho) = C(B,rho) = 1 with [A,B] != 0",
        })
    status, value, povm = _joint_povm_search(a, b, ca, cb)
    if value is not None and value <= FEASIBLE_RESIDUAL:
        return SimultaneityResult(True, {"kind": "joint-povm", "residual": value, "povm": povm})
    if value is not None and value >= INFEASIBLE_RESIDUAL and status in ("optimal", "optimal_inaccurate"):
        return SimultaneityResult(False, {"kind": "infeasible", "residual": value})
    return SimultaneityResult(None, {"kind": "undecided", "status": status, "residual": value})
