"""POVMs, instruments, measuring processes, and the realization theorem.

An instrument assigns to each outcome a linear map on operators; summed over
all outcomes the map is trace-preserving. ``CpInstrument`` stores outcome maps
in Kraus form (completely positive by construction), ``DlInstrument`` stores
raw superoperators over column-stacked vectorization, so positivity failures
(e.g. the transpose map) can be represented and detected. A
``MeasuringProcess`` is the quadruple (probe space, probe state, interaction
unitary, meter observable); ``instrument_of_process`` and
``process_of_instrument`` are the two directions of the realization theorem.

Outcome sets over the real line are finite unions of points and half-open
intervals (``RealSet``); in finite dimensions every spectrum is discrete, so
this loses nothing.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .linops import (
    DEGENERACY_TOL,
    HERM_TOL,
    PSD_TOL,
    TRACE_TOL,
    VALUE_MATCH_TOL,
    DensityState,
    InvalidOperatorError,
    Observable,
    ShapeError,
    _as_matrix,
    _readonly,
    _values_in,
    as_operator,
    basis_ket,
    dagger,
    is_unitary,
    observable_from_spectrum,
    spectral_decompose,
    unvec,
    vec,
)

# Outcome probabilities below this threshold have no defined posterior state.
PROB_TOL = 1e-12
# Choi eigenvalues below this are discarded during canonical Kraus extraction.
KRAUS_RANK_TOL = 1e-12


@dataclass(frozen=True)
class RealSet:
    """Finite union of real points and half-open intervals [lo, hi).

    Point membership is tested within VALUE_MATCH_TOL so that eigenvalues
    coming out of a solver still match their nominal outcome values.
    """

    values: tuple = ()
    intervals: tuple = ()

    @classmethod
    def of(cls, *values: float) -> "RealSet":
        return cls(values=tuple(float(v) for v in values))

    @classmethod
    def interval(cls, lo: float, hi: float) -> "RealSet":
        return cls(intervals=((float(lo), float(hi)),))

    @classmethod
    def full(cls) -> "RealSet":
        return cls(intervals=((-math.inf, math.inf),))

    def union(self, other: "RealSet") -> "RealSet":
        return RealSet(self.values + other.values, self.intervals + other.intervals)

    def contains(self, x: float, tol: float = VALUE_MATCH_TOL) -> bool:
        x = float(x)
        if any(abs(x - v) <= tol for v in self.values):
            return True
        return any(lo - tol <= x < hi for lo, hi in self.intervals)


FULL_LINE = RealSet.full()


def _check_distinct(values):
    vals = [float(v) for v in values]
    for i in range(len(vals)):
        for j in range(i + 1, len(vals)):
            if abs(vals[i] - vals[j]) <= VALUE_MATCH_TOL:
                raise InvalidOperatorError(f"outcome values {vals[i]} and {vals[j]} are not distinct")
    return vals


@dataclass(frozen=True)
class Povm:
    """Finite outcome-valued positive decomposition of the identity."""

    outcomes: tuple  # of (value, effect)

    def __post_init__(self):
        pairs = [(float(v), as_operator(e)) for v, e in self.outcomes]
        _check_distinct(v for v, _ in pairs)
        d = pairs[0][1].shape[0]
        total = np.zeros((d, d), dtype=complex)
        for _, e in pairs:
            if e.shape != (d, d):
                raise ShapeError("POVM effects have mixed dimensions")
            if np.abs(e - dagger(e)).max() > HERM_TOL:
                raise InvalidOperatorError("POVM effect not Hermitian")
            if np.linalg.eigvalsh((e + dagger(e)) / 2).min() < -PSD_TOL:
                raise InvalidOperatorError("POVM effect not positive semidefinite")
            total += e
        if np.abs(total - np.eye(d)).max() > HERM_TOL:
            raise InvalidOperatorError("POVM effects do not sum to identity")
        object.__setattr__(self, "outcomes", tuple((v, _readonly(e)) for v, e in pairs))

    @property
    def dim(self) -> int:
        return self.outcomes[0][1].shape[0]

    @property
    def values(self):
        return [v for v, _ in self.outcomes]

    def effect(self, subset) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for v, e in self.outcomes:
            if _values_in(v, subset):
                out = out + e
        return out


@dataclass(frozen=True)
class CpInstrument:
    """Outcome-indexed quantum operations in Kraus form.

    The stacked Kraus operators over all outcomes satisfy
    sum_k K_k^dag K_k = 1, so the total operation is trace-preserving.
    """

    outcomes: tuple  # of (value, tuple of Kraus operators)

    def __post_init__(self):
        pairs = []
        for v, ks in self.outcomes:
            ks = tuple(as_operator(k) for k in ks)
            if not ks:
                raise InvalidOperatorError("each outcome needs at least one Kraus operator")
            pairs.append((float(v), ks))
        _check_distinct(v for v, _ in pairs)
        d = pairs[0][1][0].shape[0]
        total = np.zeros((d, d), dtype=complex)
        for _, ks in pairs:
            for k in ks:
                if k.shape != (d, d):
                    raise ShapeError("Kraus operators have mixed dimensions")
                total += dagger(k) @ k
        if np.abs(total - np.eye(d)).max() > 1e-8:
            raise InvalidOperatorError("instrument total map is not trace-preserving")
        object.__setattr__(
            self, "outcomes", tuple((v, tuple(_readonly(k) for k in ks)) for v, ks in pairs)
        )

    @property
    def dim(self) -> int:
        return self.outcomes[0][1][0].shape[0]

    @property
    def values(self):
        return [v for v, _ in self.outcomes]

    def kraus_for(self, value: float):
        for v, ks in self.outcomes:
            if abs(v - value) <= VALUE_MATCH_TOL:
                return ks
        raise KeyError(f"no outcome with value {value}")

    @cached_property
    def povm(self) -> "Povm":
        d = self.dim
        effects = []
        for v, ks in self.outcomes:
            e = np.zeros((d, d), dtype=complex)
            for k in ks:
                e += dagger(k) @ k
            effects.append((v, e))
        return Povm(tuple(effects))


@dataclass(frozen=True)
class DlInstrument:
    """Outcome-indexed maps stored as raw superoperators (column stacking).

    Unlike ``CpInstrument``, positivity is not built in; each outcome map is
    only required to be Hermitian-preserving, and the total map
    trace-preserving. Use ``is_completely_positive`` to probe CP-ness.
    """

    dim: int
    outcomes: tuple  # of (value, dim^2 x dim^2 superoperator)

    def __post_init__(self):
        d = int(self.dim)
        pairs = []
        for v, s in self.outcomes:
            s = np.asarray(s, dtype=complex)
            if s.shape != (d * d, d * d):
                raise ShapeError("superoperator must be dim^2 x dim^2")
            choi = choi_matrix(s, d)
            if np.abs(choi - dagger(choi)).max() > HERM_TOL:
                raise InvalidOperatorError("outcome map is not Hermitian-preserving")
            pairs.append((float(v), s))
        _check_distinct(v for v, _ in pairs)
        total = sum(s for _, s in pairs)
        ident = vec(np.eye(d))
        if np.abs(dagger(total) @ ident - ident).max() > TRACE_TOL * d:
            raise InvalidOperatorError("total map is not trace-preserving")
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "outcomes", tuple((v, _readonly(s)) for v, s in pairs))

    @property
    def values(self):
        return [v for v, _ in self.outcomes]

    @cached_property
    def povm(self) -> "Povm":
        d = self.dim
        ident = vec(np.eye(d))
        return Povm(tuple((v, unvec(dagger(s) @ ident, d)) for v, s in self.outcomes))


@dataclass(frozen=True)
class MeasuringProcess:
    """Quadruple (probe space, probe state, interaction unitary, meter).

    The unitary acts on H (x) K with the measured system first; the meter is
    an observable on the probe space K.
    """

    probe_dim: int
    probe_state: DensityState
    unitary: np.ndarray
    meter: Observable

    def __post_init__(self):
        k = int(self.probe_dim)
        u = as_operator(self.unitary)
        if u.shape[0] % k != 0:
            raise ShapeError("unitary dimension is not a multiple of the probe dimension")
        if not is_unitary(u, HERM_TOL):
            raise InvalidOperatorError("measuring interaction is not unitary")
        if self.probe_state.dim != k or self.meter.dim != k:
            raise ShapeError("probe state / meter must live on the probe space")
        object.__setattr__(self, "probe_dim", k)
        object.__setattr__(self, "unitary", _readonly(u))

    @property
    def system_dim(self) -> int:
        return self.unitary.shape[0] // self.probe_dim


# ---------------------------------------------------------------------------
# superoperator helpers
# ---------------------------------------------------------------------------

def kraus_to_superop(kraus) -> np.ndarray:
    """Column-stacking superoperator sum_k conj(K_k) (x) K_k."""
    ks = [as_operator(k) for k in kraus]
    d = ks[0].shape[0]
    s = np.zeros((d * d, d * d), dtype=complex)
    for k in ks:
        s += np.kron(k.conj(), k)
    return s


def choi_matrix(superop: np.ndarray, dim: int, normalized: bool = True) -> np.ndarray:
    """Choi matrix sum_ij E_ij (x) L(E_ij), optionally scaled by 1/dim.

    With ``normalized=True`` this is the state obtained by feeding one half
    of a maximally entangled pair through the map, so the transpose map on a
    qubit has minimum eigenvalue -1/2.
    """
    d = int(dim)
    s = np.asarray(superop, dtype=complex)
    c = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            unit = np.zeros((d, d), dtype=complex)
            unit[i, j] = 1.0
            c += np.kron(unit, unvec(s @ vec(unit), d))
    return c / d if normalized else c


def outcome_superops(inst) -> dict:
    """Map outcome value -> superoperator for either instrument flavor."""
    if isinstance(inst, DlInstrument):
        return {v: np.array(s) for v, s in inst.outcomes}
    return {v: kraus_to_superop(ks) for v, ks in inst.outcomes}


def instrument_distance(a, b) -> float:
    """Max over outcomes of the Frobenius distance between outcome superoperators.

    Outcome values are paired within VALUE_MATCH_TOL; an unpaired outcome
    counts with the full norm of its map.
    """
    sa = outcome_superops(a)
    sb = outcome_superops(b)
    remaining = dict(sb)
    dist = 0.0
    for v, s in sa.items():
        match = min(remaining, key=lambda w: abs(w - v), default=None)
        if match is not None and abs(match - v) <= VALUE_MATCH_TOL:
            dist = max(dist, float(np.linalg.norm(s - remaining.pop(match))))
        else:
            dist = max(dist, float(np.linalg.norm(s)))
    for s in remaining.values():
        dist = max(dist, float(np.linalg.norm(s)))
    return dist


def dl_from_cp(inst: CpInstrument) -> DlInstrument:
    return DlInstrument(inst.dim, tuple((v, kraus_to_superop(ks)) for v, ks in inst.outcomes))


# ---------------------------------------------------------------------------
# core operations
# ---------------------------------------------------------------------------

def born_probability(a: Observable, subset, rho) -> float:
    """Tr[E^A(subset) rho]."""
    r = _as_matrix(rho)
    if r.shape[0] != a.dim:
        raise ShapeError("state and observable dimensions differ")
    p = float(np.trace(a.projection_for(subset) @ r).real)
    return min(max(p, 0.0), 1.0)


def projective_instrument(a: Observable) -> CpInstrument:
    """Instrument of the projective (von Neumann-Lueders) measurement of A."""
    return CpInstrument(tuple((v, (p,)) for v, p in a.spectrum))


def _apply_kraus(kraus, rho: np.ndarray) -> np.ndarray:
    out = np.zeros_like(rho)
    for k in kraus:
        out += k @ rho @ dagger(k)
    return out


def _apply_superop(s: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return unvec(s @ vec(rho), rho.shape[0])


def apply_instrument(inst, subset, rho):
    """Apply I(subset) to rho; returns (probability, unnormalized output)."""
    r = _as_matrix(rho)
    d = inst.dim
    if r.shape[0] != d:
        raise ShapeError("state dimension does not match the instrument")
    out = np.zeros((d, d), dtype=complex)
    if isinstance(inst, DlInstrument):
        for v, s in inst.outcomes:
            if _values_in(v, subset):
                out += _apply_superop(s, r)
    else:
        for v, ks in inst.outcomes:
            if _values_in(v, subset):
                out += _apply_kraus(ks, r)
    return float(np.trace(out).real), out


def total_operation(inst, rho) -> np.ndarray:
    """The non-selective state change I(full line) applied to rho."""
    return apply_instrument(inst, FULL_LINE, rho)[1]


def dual_total(inst, x: np.ndarray) -> np.ndarray:
    """Dual (Heisenberg-picture) total map T*(X) = sum_k K^dag X K."""
    x = as_operator(x)
    out = np.zeros_like(x)
    if isinstance(inst, DlInstrument):
        s = sum(sup for _, sup in inst.outcomes)
        return unvec(dagger(s) @ vec(x), inst.dim)
    for _, ks in inst.outcomes:
        for k in ks:
            out += dagger(k) @ x @ k
    return out


def povm_of_instrument(inst) -> Povm:
    """The POVM x -> I({x})^*(1); cached on the (immutable) instrument."""
    return inst.povm


def posterior_states(inst, rho, prob_tol: float = PROB_TOL):
    """Outcome-wise posterior states: (value, probability, posterior).

    Outcomes with probability <= prob_tol are omitted (their posterior is
    indefinite). The probability-weighted mixture of the returned posteriors
    reconstructs the non-selective output up to the dropped mass.
    """
    out = []
    for v, _ in inst.outcomes:
        p, unnorm = apply_instrument(inst, RealSet.of(v), rho)
        if p > prob_tol:
            sigma = (unnorm + dagger(unnorm)) / (2 * p)
            out.append((v, p, DensityState(sigma)))
    if not out:
        warnings.warn("all outcome probabilities fell below the posterior threshold")
    return out


def instrument_of_process(mp: MeasuringProcess) -> CpInstrument:
    """The instrument rho -> Tr_K[(1 (x) E^M(dx)) U(rho (x) rho0)U^dag].

    For each meter eigenvalue the outcome operation is assembled from the
    factorization K_{k,l} = sqrt(p_l) (1 (x) <e_k|) U (1 (x) |f_l>) with
    rho0 = sum_l p_l |f_l><f_l| and {e_k} spanning the meter eigenspace; the
    returned Kraus set is canonicalized through the outcome's Choi matrix.
    """
    d = mp.system_dim
    kdim = mp.probe_dim
    u4 = mp.unitary.reshape(d, kdim, d, kdim)
    pw, pv = np.linalg.eigh(mp.probe_state.op)
    probe_vecs = [(float(p), pv[:, i]) for i, p in enumerate(pw) if p > PROB_TOL]
    outcomes = []
    for value, q in mp.meter.spectrum:
        qw, qv = np.linalg.eigh(q)
        meter_vecs = [qv[:, i] for i, w in enumerate(qw) if w > 0.5]
        choi = np.zeros((d * d, d * d), dtype=complex)
        for e in meter_vecs:
            # contract the probe output index with <e|
            ue = np.tensordot(u4, e.conj(), axes=([1], [0]))  # (d, d, kdim)
            for p, f in probe_vecs:
                kop = math.sqrt(p) * np.tensordot(ue, f, axes=([2], [0]))
                kv = vec(kop)
                choi += np.outer(kv, kv.conj())
        ks = _kraus_from_vec_gram(choi, d)
        outcomes.append((value, tuple(ks)))
    return CpInstrument(tuple(outcomes))


def _kraus_from_vec_gram(choi_vec: np.ndarray, dim: int, rank_tol: float = KRAUS_RANK_TOL):
    """Kraus operators from sum_j vec(K_j) vec(K_j)^dag, minimal rank."""
    w, v = np.linalg.eigh((choi_vec + dagger(choi_vec)) / 2)
    ks = []
    for lam, col in zip(w, v.T):
        if lam > rank_tol:
            ks.append(math.sqrt(lam) * unvec(col, dim))
    if not ks:
        ks.append(np.zeros((dim, dim), dtype=complex))
    return ks


def unitary_completion(placed_columns, total_dim: int) -> np.ndarray:
    """Extend orthonormal columns to a full unitary by modified Gram-Schmidt.

    ``placed_columns`` maps column index -> unit vector; the remaining
    columns are filled from the canonical basis, deterministically.
    """
    u = np.zeros((total_dim, total_dim), dtype=complex)
    span = []
    for c, v in placed_columns.items():
        u[:, c] = v
        span.append(np.asarray(v, dtype=complex))
    idx = 0
    for c in range(total_dim):
        if c in placed_columns:
            continue
        while True:
            cand = basis_ket(total_dim, idx % total_dim)
            idx += 1
            for _ in range(2):  # two MGS passes keep the completion orthonormal
                for s in span:
                    cand = cand - (s.conj() @ cand) * s
            n = np.linalg.norm(cand)
            if n > 1e-6:
                cand = cand / n
                break
        span.append(cand)
        u[:, c] = cand
    return u


def process_of_instrument(inst: CpInstrument) -> MeasuringProcess:
    """A pure measuring process realizing the instrument (realization theorem).

    Builds the isometry V psi = sum_{i,k} (K_{i,k} psi) (x) |i,k>, completes
    it to a unitary on H (x) K by modified Gram-Schmidt, uses the pure probe
    state |0> and a meter with eigenvalue x_i on the |i,.> sector.
    """
    d = inst.dim
    blocks = []
    sector = []
    for v, ks in inst.outcomes:
        sector.append((v, len(ks)))
        blocks.extend(ks)
    m = len(blocks)
    # isometry as a (d*m, d) matrix; probe index is the fast axis
    iso = np.zeros((d * m, d), dtype=complex)
    for c, k in enumerate(blocks):
        for a in range(d):
            iso[a * m + c, :] = iso[a * m + c, :] + k[a, :]
    u = unitary_completion({j * m: iso[:, j] for j in range(d)}, d * m)
    probe_state = DensityState.pure(basis_ket(m, 0))
    meter_pairs = []
    offset = 0
    for v, count in sector:
        p = np.zeros((m, m), dtype=complex)
        for k in range(count):
            p[offset + k, offset + k] = 1.0
        meter_pairs.append((v, p))
        offset += count
    meter = observable_from_spectrum(meter_pairs)
    return MeasuringProcess(m, probe_state, u, meter)


def is_completely_positive(inst):
    """Probe every outcome map's Choi matrix for positivity.

    Returns (flag, most negative Choi eigenvalue found). The Choi matrices
    are normalized (maximally entangled input), so the transpose map on a
    qubit reports -1/2.
    """
    d = inst.dim
    min_eig = math.inf
    sups = outcome_superops(inst)
    for s in sups.values():
        c = choi_matrix(s, d, normalized=True)
        w = np.linalg.eigvalsh((c + dagger(c)) / 2)
        min_eig = min(min_eig, float(w.min()))
    return bool(min_eig >= -PSD_TOL), min_eig


def transpose_instrument(dim: int, value: float = 0.0) -> DlInstrument:
    """Single-outcome instrument whose operation is the transpose map.

    Trace-preserving and positive but not completely positive: the canonical
    example of a Davies-Lewis instrument with no measuring process.
    """
    d = int(dim)
    s = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            unit = np.zeros((d, d), dtype=complex)
            unit[i, j] = 1.0
            s[:, j * d + i] = vec(unit.T)
    return DlInstrument(d, ((float(value), s),))


def transpose_composed_instrument(a: Observable) -> DlInstrument:
    """Instrument with outcome maps rho -> transpose(E^A({x}) rho E^A({x}))."""
    d = a.dim
    t = transpose_instrument(d).outcomes[0][1]
    outcomes = []
    for v, p in a.spectrum:
        proj_superop = np.kron(p.conj(), p)
        outcomes.append((v, t @ proj_superop))
    return DlInstrument(d, tuple(outcomes))


def evolution_unitary(h: np.ndarray, t: float, hbar: float = 1.0) -> np.ndarray:
    """exp(-i H t / hbar) through the eigendecomposition of H."""
    h = as_operator(h)
    w, v = np.linalg.eigh((h + dagger(h)) / 2)
    return (v * np.exp(-1j * w * t / hbar)) @ dagger(v)


def sequential_joint_distribution(insts, evolutions, times, rho, subsets, hbar: float = 1.0) -> float:
    """Joint outcome probability of a chain of measurements.

    Tr[I_n(D_n) a(t_n - t_{n-1}) ... I_1(D_1) a(t_1) rho]: ``evolutions[i]``
    is applied before instrument ``i``. An entry may be None (no evolution),
    a unitary (used as-is when ``times[i]`` is None), or a Hamiltonian
    exponentiated over the time difference ``times[i] - times[i-1]``.
    """
    n = len(insts)
    if not (len(evolutions) == len(times) == len(subsets) == n):
        raise ShapeError("instrument, evolution, time, and outcome-set lists must have equal length")
    state = np.array(_as_matrix(rho))
    prev_t = 0.0
    for inst, evo, t, subset in zip(insts, evolutions, times, subsets):
        if evo is not None:
            if t is None:
                u = as_operator(evo)
                if not is_unitary(u, HERM_TOL):
                    raise InvalidOperatorError("evolution operator is not unitary")
            else:
                u = evolution_unitary(evo, float(t) - prev_t, hbar)
                prev_t = float(t)
            state = u @ state @ dagger(u)
        elif t is not None:
            prev_t = float(t)
        _, state = apply_instrument(inst, subset, state)
    return float(np.trace(state).real)


# ---------------------------------------------------------------------------
# serialization (JSON-compatible dicts; complex matrices as row-major [re, im])
# ---------------------------------------------------------------------------

def _matrix_to_pairs(m: np.ndarray):
    flat = np.asarray(m, dtype=complex).ravel(order="C")
    return [[float(z.real), float(z.imag)] for z in flat]


def _pairs_to_matrix(pairs, dim: int) -> np.ndarray:
    flat = np.array([complex(re, im) for re, im in pairs])
    return flat.reshape(dim, dim)


def instrument_to_dict(inst: CpInstrument) -> dict:
    return {
        "dim": inst.dim,
        "outcomes": [
            {"value": v, "kraus": [_matrix_to_pairs(k) for k in ks]}
            for v, ks in inst.outcomes
        ],
    }


def instrument_from_dict(data: dict) -> CpInstrument:
    d = int(data["dim"])
    outcomes = tuple(
        (float(o["value"]), tuple(_pairs_to_matrix(k, d) for k in o["kraus"]))
        for o in data["outcomes"]
    )
    return CpInstrument(outcomes)


def process_to_dict(mp: MeasuringProcess) -> dict:
    return {
        "probe_dim": mp.probe_dim,
        "rho0": _matrix_to_pairs(mp.probe_state.op),
        "U": _matrix_to_pairs(mp.unitary),
        "meter": _matrix_to_pairs(mp.meter.op),
    }


def process_from_dict(data: dict) -> MeasuringProcess:
    k = int(data["probe_dim"])
    rho0 = DensityState(_pairs_to_matrix(data["rho0"], k))
    total = int(round(math.sqrt(len(data["U"]))))
    u = _pairs_to_matrix(data["U"], total)
    meter = spectral_decompose(_pairs_to_matrix(data["meter"], k), DEGENERACY_TOL)
    return MeasuringProcess(k, rho0, u, meter)
