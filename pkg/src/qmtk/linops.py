"""Dense complex operator algebra kernel.

Everything downstream (instruments, error analysis, conservation bounds,
quantum logic) is built on the primitives here: spectral decomposition with
eigenvalue clustering, tensor products, partial traces, and trace distance.
Operators are plain complex ``numpy`` arrays; ``Observable`` and
``DensityState`` wrap them together with the validated structure the rest of
the toolkit relies on.

Basis convention: composite systems use the computational basis ordered
lexicographically with the first tensor factor most significant, i.e. the
index of ``|a> (x) |b>`` on H1 (x) H2 is ``a * dim(H2) + b`` (the ``np.kron``
convention). Vectorization is column-stacking: ``vec(X)[j*d + i] = X[i, j]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Default tolerances, calibrated for double-precision eigensolvers at dims <= 4096.
HERM_TOL = 1e-9
TRACE_TOL = 1e-9
PSD_TOL = 1e-9
DEGENERACY_TOL = 1e-8
# Matching measurement-outcome values against eigenvalues.
VALUE_MATCH_TOL = 1e-8


class QmtkError(Exception):
    """Base class for toolkit errors."""


class ShapeError(QmtkError):
    """Operator dimensions do not match the operation's requirements."""


class InvalidOperatorError(QmtkError):
    """An operator violates a structural requirement (hermiticity, unitarity, ...)."""


class InvalidStateError(QmtkError):
    """A state vector or density operator violates its invariants."""


class NumericalConsistencyError(QmtkError):
    """A quantity that must be non-negative came out significantly negative."""


def as_operator(x) -> np.ndarray:
    """Coerce to a square, finite, complex matrix."""
    a = np.asarray(x, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {a.shape}")
    if not (np.all(np.isfinite(a.real)) and np.all(np.isfinite(a.imag))):
        raise InvalidOperatorError("operator contains non-finite entries")
    return a


def dagger(x: np.ndarray) -> np.ndarray:
    return np.conjugate(np.transpose(x))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def tensor(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product, first factor most significant."""
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, op)
    return out


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(x, dtype=complex).flatten(order="F")


def unvec(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=complex).ravel()
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
    return v.reshape((dim, dim), order="F")


def frobenius_norm(x: np.ndarray) -> float:
    return float(np.linalg.norm(x))


def is_hermitian(x: np.ndarray, tol: float = HERM_TOL) -> bool:
    x = np.asarray(x)
    return bool(np.abs(x - dagger(x)).max(initial=0.0) <= tol)


def is_unitary(x: np.ndarray, tol: float = HERM_TOL) -> bool:
    x = np.asarray(x)
    d = x.shape[0]
    return bool(np.abs(dagger(x) @ x - np.eye(d)).max(initial=0.0) <= tol)


def require_hermitian(x: np.ndarray, tol: float = HERM_TOL, what: str = "operator") -> np.ndarray:
    x = as_operator(x)
    if not is_hermitian(x, tol):
        raise InvalidOperatorError(f"{what} is not Hermitian within {tol}")
    return x


def expectation(a: np.ndarray, rho: np.ndarray) -> float:
    """Tr[A rho] as a real number (imaginary residue discarded)."""
    return float(np.trace(a @ rho).real)


def std_dev(a: np.ndarray, rho: np.ndarray) -> float:
    """Standard deviation (Tr[A^2 rho] - Tr[A rho]^2)^(1/2)."""
    m1 = expectation(a, rho)
    m2 = expectation(a @ a, rho)
    return float(np.sqrt(max(m2 - m1 * m1, 0.0)))


def basis_ket(dim: int, k: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[k] = 1.0
    return v


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    return np.outer(psi, psi.conj())


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=complex, copy=True)
    out.setflags(write=False)
    return out


def _values_in(value: float, subset) -> bool:
    """Membership of an eigenvalue in an outcome subset.

    ``subset`` is either an object exposing ``contains(x)`` or an iterable of
    reals matched within VALUE_MATCH_TOL.
    """
    contains = getattr(subset, "contains", None)
    if contains is not None:
        return bool(contains(value))
    return any(abs(value - float(v)) <= VALUE_MATCH_TOL for v in subset)


@dataclass(frozen=True)
class Observable:
    """Hermitian operator bundled with its spectral decomposition.

    ``eigenvalues`` are strictly increasing; ``projections[i]`` is the
    orthogonal projection onto the eigenspace of ``eigenvalues[i]``.
    """

    op: np.ndarray
    eigenvalues: tuple
    projections: tuple

    def __post_init__(self):
        op = require_hermitian(self.op, what="observable")
        object.__setattr__(self, "op", _readonly(op))
        object.__setattr__(self, "eigenvalues", tuple(float(v) for v in self.eigenvalues))
        object.__setattr__(self, "projections", tuple(_readonly(p) for p in self.projections))
        self._validate()

    def _validate(self):
        d = self.dim
        vals = np.array(self.eigenvalues)
        if vals.size == 0:
            raise InvalidOperatorError("observable needs at least one eigenvalue")
        if np.any(np.diff(vals) <= 0):
            raise InvalidOperatorError("eigenvalues must be strictly increasing")
        total = np.zeros((d, d), dtype=complex)
        sq_total = np.zeros((d, d), dtype=complex)
        recon = np.zeros((d, d), dtype=complex)
        for i, p in enumerate(self.projections):
            if p.shape != (d, d):
                raise ShapeError("projection dimension mismatch")
            sq = p @ p
            if np.abs(p - dagger(p)).max() > HERM_TOL or np.abs(sq - p).max() > HERM_TOL:
                raise InvalidOperatorError("spectral projection not Hermitian idempotent")
            total += p
            sq_total += sq
            recon += vals[i] * p
        if np.abs(total - np.eye(d)).max() > HERM_TOL:
            raise InvalidOperatorError("spectral projections do not sum to identity")
        # total^2 - sum of squares = sum over i != j of P_i P_j; with the
        # idempotency and completeness above this certifies pairwise
        # orthogonality without the O(n^2) product loop.
        if np.abs(total @ total - sq_total).max() > len(self.projections) * HERM_TOL:
            raise InvalidOperatorError("spectral projections not mutually orthogonal")
        if np.abs(recon - self.op).max() > HERM_TOL:
            raise InvalidOperatorError("spectral decomposition does not reconstruct the operator")

    @property
    def dim(self) -> int:
        return self.op.shape[0]

    @property
    def spectrum(self):
        return list(zip(self.eigenvalues, self.projections))

    def projection_for(self, subset) -> np.ndarray:
        """Spectral projection E(subset) = sum of projections with eigenvalue in subset."""
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for val, proj in zip(self.eigenvalues, self.projections):
            if _values_in(val, subset):
                out = out + proj
        return out


@dataclass(frozen=True)
class DensityState:
    """Positive unit-trace operator."""

    op: np.ndarray

    def __post_init__(self):
        op = as_operator(self.op)
        if not is_hermitian(op, HERM_TOL):
            raise InvalidStateError("density operator is not Hermitian")
        tr = np.trace(op).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise InvalidStateError(f"density operator trace {tr} is not 1")
        if np.linalg.eigvalsh(op).min() < -PSD_TOL:
            raise InvalidStateError("density operator has a negative eigenvalue")
        object.__setattr__(self, "op", _readonly(op))

    @property
    def dim(self) -> int:
        return self.op.shape[0]

    @classmethod
    def pure(cls, psi: np.ndarray) -> "DensityState":
        psi = np.asarray(psi, dtype=complex).ravel()
        n = np.linalg.norm(psi)
        if n < 1e-12:
            raise InvalidStateError("cannot normalize the zero vector")
        return cls(projector(psi / n))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityState":
        return cls(np.eye(dim, dtype=complex) / dim)


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, (Observable, DensityState)):
        return x.op
    return as_operator(x)


def spectral_decompose(h, degeneracy_tol: float = DEGENERACY_TOL) -> Observable:
    """Spectral decomposition with single-link eigenvalue clustering.

    Eigenvalues closer than ``degeneracy_tol`` (single-link on the sorted
    spectrum) are merged into one eigenvalue, reported as the cluster mean,
    with the summed projection. This keeps degenerate spectra (spin
    projections, grid observables) at one projection per physical eigenvalue.
    """
    h = require_hermitian(_as_matrix(h), what="spectral_decompose input")
    w, v = np.linalg.eigh(h)
    clusters: list[list[int]] = [[0]]
    for i in range(1, w.size):
        if w[i] - w[clusters[-1][-1]] <= degeneracy_tol:
            clusters[-1].append(i)
        else:
            clusters.append([i])
    values = []
    projections = []
    for idx in clusters:
        cols = v[:, idx]
        p = cols @ dagger(cols)
        values.append(float(np.mean(w[idx])))
        projections.append((p + dagger(p)) / 2)
    return Observable(h, tuple(values), tuple(projections))


def observable_from_spectrum(pairs: Sequence[tuple]) -> Observable:
    """Build an Observable from explicit (eigenvalue, projection) pairs."""
    pairs = sorted(((float(v), as_operator(p)) for v, p in pairs), key=lambda t: t[0])
    vals = tuple(v for v, _ in pairs)
    projs = tuple(p for _, p in pairs)
    op = sum(v * p for v, p in pairs)
    return Observable(op, vals, projs)


def partial_trace(x: np.ndarray, dims: tuple, keep: int) -> np.ndarray:
    """Partial trace over one factor of a bipartite operator.

    ``dims = (d1, d2)``; ``keep = 0`` returns the operator on the first
    factor (tracing out the second), ``keep = 1`` the converse.
    """
    d1, d2 = int(dims[0]), int(dims[1])
    x = as_operator(x)
    if x.shape[0] != d1 * d2:
        raise ShapeError(f"operator dim {x.shape[0]} != {d1}*{d2}")
    if keep not in (0, 1):
        raise ValueError("keep must be 0 or 1")
    t = x.reshape(d1, d2, d1, d2)
    if keep == 0:
        return np.einsum("abcb->ac", t)
    return np.einsum("abad->bd", t)


def trace_norm(x: np.ndarray) -> float:
    """Sum of singular values; stable for Hermitian and non-Hermitian inputs."""
    return float(np.linalg.svd(np.asarray(x, dtype=complex), compute_uv=False).sum())


def trace_distance(rho1, rho2) -> float:
    """(1/2) Tr |rho1 - rho2|."""
    a = _as_matrix(rho1)
    b = _as_matrix(rho2)
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch {a.shape} vs {b.shape}")
    return 0.5 * trace_norm(a - b)
