"""Noise, disturbance, and the uncertainty-relation evaluators.

The rms noise of an observable A under a measuring process is the
root-mean-square of the noise operator N(A) = U^dag(1 (x) M)U - A (x) 1 in
the joint initial state; the rms disturbance of B uses
D(B) = U^dag(B (x) 1)U - B (x) 1. Both admit equivalent closed forms through
the process's POVM moments and its total operation, which is what makes the
quantities attributes of the instrument rather than of one particular
dilation. Three relation evaluators are provided: the universal
(error-disturbance) relation, the Heisenberg-type product relation, and the
commutator condition term that controls when the latter holds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instruments import (
    CpInstrument,
    DlInstrument,
    MeasuringProcess,
    Povm,
    dual_total,
    instrument_of_process,
    povm_of_instrument,
    total_operation,
)
from .linops import (
    NumericalConsistencyError,
    Observable,
    ShapeError,
    _as_matrix,
    commutator,
    dagger,
    expectation,
    std_dev,
    tensor,
)

# Squared rms values in [-NEG_SQ_TOL, 0) are rounding; anything lower is a bug.
NEG_SQ_TOL = 1e-9
RELATION_TOL = 1e-9


@dataclass(frozen=True)
class ErrorReport:
    """Everything the uncertainty evaluators measured in one trial."""

    epsilon: float
    eta: float
    sigma_a: float
    sigma_b: float
    commutator_bound: float
    mean_noise: float
    mean_disturbance: float

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "eta": self.eta,
            "sigma_a": self.sigma_a,
            "sigma_b": self.sigma_b,
            "commutator_bound": self.commutator_bound,
            "mean_noise": self.mean_noise,
            "mean_disturbance": self.mean_disturbance,
        }

    CSV_FIELDS = ("epsilon", "eta", "sigma_a", "sigma_b", "commutator_bound",
                  "mean_noise", "mean_disturbance")

    def to_csv_row(self):
        return [getattr(self, f) for f in self.CSV_FIELDS]


@dataclass(frozen=True)
class UniversalRelationResult:
    lhs: float
    rhs: float
    holds: bool
    report: ErrorReport


@dataclass(frozen=True)
class HeisenbergRelationResult:
    lhs: float
    rhs: float
    holds: bool
    condition_term: float


def noise_disturbance_operators(mp: MeasuringProcess, a: Observable, b: Observable):
    """The noise operator N(A) and disturbance operator D(B) on H (x) K."""
    d = mp.system_dim
    if a.dim != d or b.dim != d:
        raise ShapeError("observables must live on the measured system")
    eye_k = np.eye(mp.probe_dim)
    eye_h = np.eye(d)
    u = mp.unitary
    n_op = dagger(u) @ tensor(eye_h, mp.meter.op) @ u - tensor(a.op, eye_k)
    d_op = dagger(u) @ tensor(b.op, eye_k) @ u - tensor(b.op, eye_k)
    return n_op, d_op


def moment_operator(povm: Povm, n: int) -> np.ndarray:
    """The n-th moment operator sum_x x^n Pi({x})."""
    out = np.zeros((povm.dim, povm.dim), dtype=complex)
    for v, e in povm.outcomes:
        out = out + (v ** n) * e
    return (out + dagger(out)) / 2


def _sqrt_clamped(sq: float, what: str) -> float:
    if sq < -NEG_SQ_TOL:
        raise NumericalConsistencyError(f"{what}^2 = {sq} is significantly negative")
    return float(np.sqrt(max(sq, 0.0)))


def _joint_state(mp: MeasuringProcess, rho) -> np.ndarray:
    return tensor(_as_matrix(rho), mp.probe_state.op)


def _mean_reduced(mp: MeasuringProcess, x: np.ndarray) -> np.ndarray:
    """Tr_K[X (1 (x) rho0)], the probe average of an operator on H (x) K."""
    d, k = mp.system_dim, mp.probe_dim
    xt = x.reshape(d, k, d, k)
    return np.einsum("akbl,lk->ab", xt, mp.probe_state.op)


def _resolve_povm(obj) -> Povm:
    if isinstance(obj, Povm):
        return obj
    if isinstance(obj, MeasuringProcess):
        return povm_of_instrument(instrument_of_process(obj))
    return povm_of_instrument(obj)


def _resolve_instrument(obj):
    if isinstance(obj, MeasuringProcess):
        return instrument_of_process(obj)
    if isinstance(obj, (CpInstrument, DlInstrument)):
        return obj
    raise TypeError("need a measuring process or an instrument (a bare POVM has no operation)")


def noise_square_operator(povm: Povm, a: Observable) -> np.ndarray:
    """Pi^(2) - A Pi^(1) - Pi^(1) A + A^2; its mean in rho is epsilon(A)^2."""
    p1 = moment_operator(povm, 1)
    p2 = moment_operator(povm, 2)
    aa = a.op
    return p2 - aa @ p1 - p1 @ aa + aa @ aa


def disturbance_square_operator(inst, b: Observable) -> np.ndarray:
    """T*(B^2) - B T*(B) - T*(B) B + B^2; its mean in rho is eta(B)^2."""
    bb = b.op
    tb = dual_total(inst, bb)
    tb2 = dual_total(inst, bb @ bb)
    return tb2 - bb @ tb - tb @ bb + bb @ bb


def rms_noise(mp_or_inst, a: Observable, rho, method: str = "formula") -> float:
    """Root-mean-square noise epsilon(A) for the given measurement in rho.

    ``method='direct'`` evaluates <N(A)^2>^(1/2) in rho (x) rho0 and needs a
    measuring process; ``method='formula'`` evaluates the POVM moment
    expression and accepts a POVM, an instrument, or a process.
    """
    r = _as_matrix(rho)
    if method == "direct":
        if not isinstance(mp_or_inst, MeasuringProcess):
            raise TypeError("direct method needs a MeasuringProcess")
        n_op, _ = noise_disturbance_operators(mp_or_inst, a, a)
        sq = expectation(n_op @ n_op, _joint_state(mp_or_inst, r))
    elif method == "formula":
        povm = _resolve_povm(mp_or_inst)
        sq = expectation(noise_square_operator(povm, a), r)
    else:
        raise ValueError("method must be 'direct' or 'formula'")
    return _sqrt_clamped(sq, "epsilon")


def rms_disturbance(mp_or_inst, b: Observable, rho, method: str = "formula") -> float:
    """Root-mean-square disturbance eta(B); see ``rms_noise``."""
    r = _as_matrix(rho)
    if method == "direct":
        if not isinstance(mp_or_inst, MeasuringProcess):
            raise TypeError("direct method needs a MeasuringProcess")
        _, d_op = noise_disturbance_operators(mp_or_inst, b, b)
        sq = expectation(d_op @ d_op, _joint_state(mp_or_inst, r))
    elif method == "formula":
        inst = _resolve_instrument(mp_or_inst)
        sq = expectation(disturbance_square_operator(inst, b), r)
    else:
        raise ValueError("method must be 'direct' or 'formula'")
    return _sqrt_clamped(sq, "eta")


def commutator_bound(a: Observable, b: Observable, rho) -> float:
    """(1/2) |Tr([A, B] rho)|."""
    return 0.5 * abs(complex(np.trace(commutator(a.op, b.op) @ _as_matrix(rho))))


def _error_report(mp_or_inst, a: Observable, b: Observable, rho) -> ErrorReport:
    r = _as_matrix(rho)
    if isinstance(mp_or_inst, MeasuringProcess):
        mp = mp_or_inst
        n_op, _ = noise_disturbance_operators(mp, a, a)
        _, d_op = noise_disturbance_operators(mp, b, b)
        joint = _joint_state(mp, r)
        eps = _sqrt_clamped(expectation(n_op @ n_op, joint), "epsilon")
        eta = _sqrt_clamped(expectation(d_op @ d_op, joint), "eta")
        mean_n = expectation(n_op, joint)
        mean_d = expectation(d_op, joint)
    else:
        inst = _resolve_instrument(mp_or_inst)
        povm = povm_of_instrument(inst)
        eps = _sqrt_clamped(expectation(noise_square_operator(povm, a), r), "epsilon")
        eta = _sqrt_clamped(expectation(disturbance_square_operator(inst, b), r), "eta")
        mean_n = expectation(moment_operator(povm, 1), r) - expectation(a.op, r)
        mean_d = expectation(b.op, total_operation(inst, r)) - expectation(b.op, r)
    return ErrorReport(
        epsilon=eps,
        eta=eta,
        sigma_a=std_dev(a.op, r),
        sigma_b=std_dev(b.op, r),
        commutator_bound=commutator_bound(a, b, r),
        mean_noise=mean_n,
        mean_disturbance=mean_d,
    )


def check_universal_relation(mp_or_inst, a: Observable, b: Observable, rho) -> UniversalRelationResult:
    """Evaluate eps*eta + eps*sigma(B) + sigma(A)*eta >= (1/2)|Tr([A,B] rho)|."""
    rep = _error_report(mp_or_inst, a, b, rho)
    lhs = rep.epsilon * rep.eta + rep.epsilon * rep.sigma_b + rep.sigma_a * rep.eta
    rhs = rep.commutator_bound
    return UniversalRelationResult(lhs, rhs, bool(lhs >= rhs - RELATION_TOL), rep)


def mean_noise_operator(mp_or_inst, a: Observable) -> np.ndarray:
    """n(A) = Pi^(1) - A (equivalently the probe average of N(A))."""
    if isinstance(mp_or_inst, MeasuringProcess):
        n_op, _ = noise_disturbance_operators(mp_or_inst, a, a)
        return _mean_reduced(mp_or_inst, n_op)
    return moment_operator(_resolve_povm(mp_or_inst), 1) - a.op


def mean_disturbance_operator(mp_or_inst, b: Observable) -> np.ndarray:
    """d(B) = T*(B) - B (equivalently the probe average of D(B))."""
    if isinstance(mp_or_inst, MeasuringProcess):
        _, d_op = noise_disturbance_operators(mp_or_inst, b, b)
        return _mean_reduced(mp_or_inst, d_op)
    return dual_total(_resolve_instrument(mp_or_inst), b.op) - b.op


def check_heisenberg_relation(mp_or_inst, a: Observable, b: Observable, rho) -> HeisenbergRelationResult:
    """Evaluate the Heisenberg-type product relation and its condition term.

    The condition term (1/2)|Tr(([n(A), B] + [A, d(B)]) rho)| always repairs
    the product relation: eps*eta + condition_term >= rhs is a theorem, and a
    violation beyond tolerance raises, since it can only mean a numerical
    inconsistency. ``holds`` reports the bare product relation, which
    legitimate measurements (e.g. the contractive-state model) may break.
    """
    rep = _error_report(mp_or_inst, a, b, rho)
    r = _as_matrix(rho)
    n_small = mean_noise_operator(mp_or_inst, a)
    d_small = mean_disturbance_operator(mp_or_inst, b)
    term = commutator(n_small, b.op) + commutator(a.op, d_small)
    condition_term = 0.5 * abs(complex(np.trace(term @ r)))
    lhs = rep.epsilon * rep.eta
    rhs = rep.commutator_bound
    if lhs + condition_term < rhs - RELATION_TOL:
        raise NumericalConsistencyError(
            f"condition-theorem inequality violated: {lhs} + {condition_term} < {rhs}"
        )
    return HeisenbergRelationResult(lhs, rhs, bool(lhs >= rhs - RELATION_TOL), condition_term)
