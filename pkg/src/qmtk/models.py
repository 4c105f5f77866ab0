"""Concrete measuring-process models and seeded random generators.

The two continuous-variable models (von Neumann's position meter and the
contractive-state measurement) are discretized on a periodic grid with DFT
momentum. The grid's canonical commutator [x, p] = i*hbar holds only on
states that are band-limited in both position and momentum; the calibrated
band at n_points = 256 is Gaussian widths in [L/64, L/20], where the relative
defect ||([x,p] - i*hbar) psi|| / ||psi|| stays below 1e-8 for conventionally
normalized Gaussians (it grows to ~6e-6 by L/16 and is O(1) by L/8, driven by
the wrap-around of x at the boundary). The exact-norm quantization used by
the default Gaussian constructor adds amplitude noise of one part in 2^23,
lifting the state-level defect to ~5e-5 in the same band while leaving trace
quantities (commutator means, moments) accurate to ~1e-12. Model constructors
build the instruments directly from their closed-form Kraus families; the
interaction Hamiltonians are never exponentiated.

Random process/instrument generators used by every audit live here too; all
are deterministic functions of an integer seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .instruments import CpInstrument, MeasuringProcess
from .linops import (
    DensityState,
    InvalidStateError,
    Observable,
    dagger,
    observable_from_spectrum,
)

# Gaussian widths (in units of grid length) with commutator defect <= 1e-8 at
# n_points = 256; see the module docstring.
CALIBRATED_WIDTH_BAND = (1.0 / 64.0, 1.0 / 20.0)


@dataclass(frozen=True)
class GridSpace:
    """Periodic position grid with DFT-conjugate momentum.

    Positions are x_k = -L/2 + k L/N; momenta are 2 pi hbar m / L for
    m in [-N/2, N/2). ``x_op`` is diagonal in the computational basis and
    ``p_op = F^dag diag(p) F`` with F the unitary DFT, so p generates exact
    cyclic grid translations.
    """

    n_points: int
    length: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        n = int(self.n_points)
        if n < 2 or n & (n - 1):
            raise ValueError("n_points must be a power of two")
        if self.length <= 0 or self.hbar <= 0:
            raise ValueError("length and hbar must be positive")
        object.__setattr__(self, "n_points", n)

    @property
    def x_values(self) -> np.ndarray:
        n = self.n_points
        return -self.length / 2 + np.arange(n) * self.length / n

    @property
    def p_values(self) -> np.ndarray:
        n = self.n_points
        m = np.fft.fftfreq(n, d=1.0 / n)  # 0, 1, ..., N/2-1, -N/2, ..., -1
        return 2 * np.pi * self.hbar * m / self.length

    @cached_property
    def dft(self) -> np.ndarray:
        n = self.n_points
        k = np.arange(n)
        return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)

    @cached_property
    def x_op(self) -> Observable:
        xs = self.x_values
        n = self.n_points
        pairs = []
        for k in range(n):
            p = np.zeros((n, n), dtype=complex)
            p[k, k] = 1.0
            pairs.append((xs[k], p))
        return observable_from_spectrum(pairs)

    @cached_property
    def p_op(self) -> Observable:
        f = self.dft
        ps = self.p_values
        pairs = []
        for m in range(self.n_points):
            v = f[m].conj()
            pairs.append((ps[m], np.outer(v, v.conj())))
        return observable_from_spectrum(pairs)

    def translation(self, steps: int) -> np.ndarray:
        """Cyclic grid translation by ``steps`` points (= exp(-i x p/hbar))."""
        return np.roll(np.eye(self.n_points), steps, axis=0).astype(complex)

    def commutator_defect(self, psi: np.ndarray) -> float:
        """|| ([x, p] - i hbar) psi || / || psi || on the grid."""
        psi = np.asarray(psi, dtype=complex)
        x = self.x_op.op
        p = self.p_op.op
        resid = x @ (p @ psi) - p @ (x @ psi) - 1j * self.hbar * psi
        return float(np.linalg.norm(resid) / np.linalg.norm(psi))


_AMP_BITS = 23  # amplitude quantum 2^-23; squares are exact multiples of 2^-46


def _four_square_decomposition(t: int):
    """Lagrange decomposition t = a^2 + b^2 + c^2 + d^2 by bounded search."""
    if t < 0:
        raise ValueError("need a nonnegative integer")
    from math import isqrt

    for a in range(isqrt(t), -1, -1):
        ra = t - a * a
        if ra > 3 * a * a + 3:  # a too small to lead the decomposition
            break
        for b in range(isqrt(ra), -1, -1):
            rb = ra - b * b
            if rb > 2 * b * b + 2:
                break
            c = isqrt(rb)
            while c * c * 2 >= rb:
                d_sq = rb - c * c
                d = isqrt(d_sq)
                if d * d == d_sq:
                    return a, b, c, d
                c -= 1
    raise RuntimeError("four-square search failed")  # unreachable by Lagrange


def quantize_unit_vector(profile: np.ndarray) -> np.ndarray:
    """Round a real profile to amplitudes s_j 2^-23 with sum_j s_j^2 = 2^46.

    Every squared amplitude is then an exact dyadic rational whose partial
    sums are all exactly representable, so norms computed by any BLAS kernel
    (any summation order, with or without FMA) come out exactly 1.0. The
    contractive-model POVM being *exactly* the position spectral measure
    rests on this. The square-sum budget is balanced by a greedy descent and
    a final four-square decomposition spread over the four smallest entries.

    Profiles shorter than 8 samples are returned conventionally normalized.
    """
    amps = np.abs(np.asarray(profile, dtype=float))
    nrm = np.linalg.norm(amps)
    if nrm == 0:
        raise InvalidStateError("cannot quantize the zero profile")
    if amps.size < 8:
        return (amps / nrm).astype(complex)
    s = np.round(amps / nrm * (1 << _AMP_BITS)).astype(np.int64)
    target = np.int64(1) << (2 * _AMP_BITS)
    # greedy, never overshooting: each step strictly shrinks the residual
    while True:
        r = target - int(np.sum(s * s))
        if r > 0:
            fits = np.nonzero(2 * s + 1 <= r)[0]
        else:
            pos = np.nonzero(s > 0)[0]
            fits = pos[2 * s[pos] - 1 <= -r]
        if r == 0 or fits.size == 0:
            break
        j = fits[np.argmax(s[fits])]
        s[j] += 1 if r > 0 else -1
    r = target - int(np.sum(s * s))
    if r != 0:
        # absorb the leftover exactly: free the smallest entries until their
        # square budget covers the residual, then redistribute it as a
        # four-square decomposition
        order = np.argsort(s)
        chosen = []
        budget = r
        for idx in order:
            chosen.append(int(idx))
            budget += int(s[idx]) ** 2
            if len(chosen) >= 4 and budget >= 0:
                break
        s[chosen] = 0
        s[chosen[:4]] = _four_square_decomposition(budget)
    return (s * 2.0 ** (-_AMP_BITS)).astype(complex)


def gaussian_wavefunction(grid: GridSpace, center: float = 0.0, width: float | None = None,
                          momentum: float = 0.0, exact_norm: bool = True) -> np.ndarray:
    """Normalized Gaussian grid vector of position std ``width`` around ``center``.

    With ``exact_norm`` (the default) zero-momentum profiles are quantized
    (``quantize_unit_vector``) so their grid norm is exactly 1 in floating
    point, which the model constructors rely on. Quantization adds amplitude
    noise of one part in 2^23; it is invisible in trace-level quantities but
    raises the state-level commutator defect to ~1e-5, so defect-sensitive
    work can pass ``exact_norm=False``. Momentum boosts make the amplitudes
    complex and always fall back to conventional normalization.
    """
    if width is None:
        width = grid.length / 20
    x = grid.x_values
    psi = np.exp(-((x - center) ** 2) / (4 * width**2)).astype(complex)
    if momentum:
        psi *= np.exp(1j * momentum * x / grid.hbar)
        return psi / np.linalg.norm(psi)
    if not exact_norm:
        return psi / np.linalg.norm(psi)
    return quantize_unit_vector(psi.real)


def _require_normalized(xi: np.ndarray, n: int) -> np.ndarray:
    xi = np.asarray(xi, dtype=complex).ravel()
    if xi.size != n:
        raise InvalidStateError(f"wavefunction has {xi.size} samples, grid has {n}")
    if abs(np.linalg.norm(xi) - 1.0) > 1e-9:
        raise InvalidStateError("wavefunction is not normalized on the grid")
    return xi


def von_neumann_instrument(grid: GridSpace, xi: np.ndarray) -> CpInstrument:
    """Position meter with additive probe noise drawn from |xi|^2.

    One outcome per grid point x_k, with the single multiplication Kraus
    operator diag_j xi(x_j - x_k); displacements wrap cyclically, which makes
    the total map exactly trace-preserving.
    """
    n = grid.n_points
    xi = _require_normalized(xi, n)
    xs = grid.x_values
    outcomes = []
    for k in range(n):
        outcomes.append((float(xs[k]), (np.diag(np.roll(xi, k - n // 2)),)))
    return CpInstrument(tuple(outcomes))


def contractive_instrument(grid: GridSpace, xi: np.ndarray) -> CpInstrument:
    """Measure position sharply, re-prepare the translated posterior xi.

    Kraus operator for outcome x_k is |xi_k><x_k| with xi_k the cyclic
    translate of xi by k grid points, so the POVM is exactly the position
    spectral measure and the position error vanishes identically.
    """
    n = grid.n_points
    xi = _require_normalized(xi, n)
    xs = grid.x_values
    outcomes = []
    for k in range(n):
        xik = np.roll(xi, k - n // 2)
        kraus = np.zeros((n, n), dtype=complex)
        kraus[:, k] = xik
        outcomes.append((float(xs[k]), (kraus,)))
    return CpInstrument(tuple(outcomes))


# ---------------------------------------------------------------------------
# seeded random generators
# ---------------------------------------------------------------------------

def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def haar_unitary(dim: int, seed) -> np.ndarray:
    """Haar-like unitary from the QR of a seeded complex Gaussian matrix."""
    rng = _rng(seed)
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    ph = np.diag(r).copy()
    ph = ph / np.abs(ph)
    return q * ph.conj()


def random_hermitian(dim: int, seed, scale: float = 1.0) -> np.ndarray:
    rng = _rng(seed)
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * (g + dagger(g)) / 2


def random_pure_state(dim: int, seed) -> DensityState:
    rng = _rng(seed)
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return DensityState.pure(v)


def random_density(dim: int, seed) -> DensityState:
    rng = _rng(seed)
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    m = g @ dagger(g)
    return DensityState(m / np.trace(m).real)


def random_observable(dim: int, seed, scale: float = 1.0) -> Observable:
    from .linops import spectral_decompose

    return spectral_decompose(random_hermitian(dim, seed, scale))


def _distinct_values(n: int, rng: np.random.Generator) -> np.ndarray:
    return np.arange(n) + rng.uniform(-0.3, 0.3, size=n)


def random_measuring_process(object_dim: int, probe_dim: int, seed) -> MeasuringProcess:
    """Haar interaction, random pure probe, random non-degenerate meter."""
    if object_dim < 2 or probe_dim < 2:
        raise ValueError("dimensions must be at least 2")
    rng = _rng(seed)
    u = haar_unitary(object_dim * probe_dim, rng)
    probe = random_pure_state(probe_dim, rng)
    basis = haar_unitary(probe_dim, rng)
    vals = _distinct_values(probe_dim, rng)
    pairs = [(vals[i], np.outer(basis[:, i], basis[:, i].conj())) for i in range(probe_dim)]
    meter = observable_from_spectrum(pairs)
    return MeasuringProcess(probe_dim, probe, u, meter)


def random_cp_instrument(dim: int, n_outcomes: int, kraus_per_outcome: int, seed) -> CpInstrument:
    """Random instrument whose stacked Kraus block is a seeded isometry."""
    if dim < 2:
        raise ValueError("dimension must be at least 2")
    rng = _rng(seed)
    m = n_outcomes * kraus_per_outcome
    g = rng.standard_normal((dim * m, dim)) + 1j * rng.standard_normal((dim * m, dim))
    q, r = np.linalg.qr(g)
    ph = np.diag(r).copy()
    ph = ph / np.abs(ph)
    iso = q * ph.conj()
    vals = _distinct_values(n_outcomes, rng)
    outcomes = []
    for i in range(n_outcomes):
        ks = tuple(
            iso[(i * kraus_per_outcome + j) * dim:(i * kraus_per_outcome + j + 1) * dim, :]
            for j in range(kraus_per_outcome)
        )
        outcomes.append((float(vals[i]), ks))
    return CpInstrument(tuple(outcomes))
