"""Batch verification front end.

``qmtk run --config cfg.json`` executes one named experiment; ``qmtk audit
<suite> --seed S --trials N`` runs a registered randomized audit with
defaults. Reports are a JSON summary plus CSV rows, written under ``--out``;
identical configurations produce byte-identical report bodies (no timestamps
are emitted). Exit codes: 0 success, 1 invariant violation or diagnostic
failure, 2 usage error. ``QMTK_THREADS`` caps trial-level parallelism.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import conservation, errdist, instruments, linops, models, qlogic

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2

RELATION_TOL = 1e-9
GRID_TOL = 1e-6

DEFAULT_TOLERANCES = {
    "herm": linops.HERM_TOL,
    "trace": linops.TRACE_TOL,
    "psd": linops.PSD_TOL,
    "degeneracy": linops.DEGENERACY_TOL,
    "posterior_prob": instruments.PROB_TOL,
    "relation": RELATION_TOL,
    "grid": GRID_TOL,
}


@dataclass
class RunConfig:
    """Parsed experiment configuration."""

    experiment: str
    seed: int = 0
    trials: int | None = None
    dims: list = field(default_factory=list)
    grid: dict = field(default_factory=dict)
    hbar: float = 1.0
    tolerances: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise UsageError(f"unknown experiment {self.experiment!r}; "
                             f"known: {', '.join(sorted(EXPERIMENTS))}")
        if self.trials is not None and self.trials < 1:
            raise UsageError("trials must be >= 1")
        if self.hbar <= 0:
            raise UsageError("hbar must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {"experiment", "seed", "trials", "dims", "grid", "hbar", "tolerances"}
        if "experiment" not in data:
            raise UsageError("config needs an 'experiment' field")
        params = {k: v for k, v in data.items() if k not in known}
        return cls(
            experiment=data["experiment"],
            seed=int(data.get("seed", 0)),
            trials=int(data["trials"]) if "trials" in data else None,
            dims=list(data.get("dims", [])),
            grid=dict(data.get("grid", {})),
            hbar=float(data.get("hbar", 1.0)),
            tolerances=dict(data.get("tolerances", {})),
            params=params,
        )

    def tol(self, name: str) -> float:
        """Effective tolerance: config override or the documented default."""
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES[name]))

    def to_dict(self) -> dict:
        out = {
            "experiment": self.experiment,
            "seed": self.seed,
            "dims": self.dims,
            "grid": self.grid,
            "hbar": self.hbar,
            "tolerances": self.tolerances,
        }
        if self.trials is not None:
            out["trials"] = self.trials
        out.update(self.params)
        return out


class UsageError(Exception):
    """Bad configuration or command line (exit code 2)."""


@dataclass
class Report:
    experiment: str
    config: dict
    summary: dict
    rows: list
    fieldnames: list

    @property
    def violations(self) -> int:
        return int(self.summary.get("violations", 0))

    def json_body(self) -> str:
        body = {
            "experiment": self.experiment,
            "config": self.config,
            "summary": self.summary,
            "tolerances": dict(DEFAULT_TOLERANCES, **self.config.get("tolerances", {})),
        }
        return json.dumps(body, sort_keys=True, indent=2, default=float) + "\n"

    def csv_body(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow(row)
        return buf.getvalue()


def _map_trials(fn, n: int) -> list:
    """Run fn(0..n-1), optionally on a QMTK_THREADS-wide pool; index order kept."""
    workers = int(os.environ.get("QMTK_THREADS", "1") or "1")
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, range(n)))
    return [fn(i) for i in range(n)]


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial])


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _exp_ozawa_audit(cfg: RunConfig) -> Report:
    trials = cfg.trials or 1000
    object_dims = cfg.dims or [2, 3]
    probe_dims = cfg.params.get("probe_dims", [2, 3, 4])

    def one(t):
        rng = _trial_rng(cfg.seed, t)
        od = int(rng.choice(object_dims))
        pd = int(rng.choice(probe_dims))
        mp = models.random_measuring_process(od, pd, rng)
        a = models.random_observable(od, rng)
        b = models.random_observable(od, rng)
        rho = models.random_density(od, rng)
        ur = errdist.check_universal_relation(mp, a, b, rho)
        hr = errdist.check_heisenberg_relation(mp, a, b, rho)
        return {
            "trial": t, "object_dim": od, "probe_dim": pd,
            "epsilon": ur.report.epsilon, "eta": ur.report.eta,
            "sigma_a": ur.report.sigma_a, "sigma_b": ur.report.sigma_b,
            "lhs": ur.lhs, "rhs": ur.rhs, "margin": ur.lhs - ur.rhs,
            "condition_margin": hr.lhs + hr.condition_term - hr.rhs,
        }

    rows = _map_trials(one, trials)
    tol = cfg.tol("relation")
    violations = sum(1 for r in rows if r["margin"] < -tol)
    cond_violations = sum(1 for r in rows if r["condition_margin"] < -tol)
    summary = {
        "trials": trials,
        "violations": violations + cond_violations,
        "universal_violations": violations,
        "condition_violations": cond_violations,
        "min_margin": min(r["margin"] for r in rows),
        "min_condition_margin": min(r["condition_margin"] for r in rows),
    }
    return Report("ozawa-audit", cfg.to_dict(), summary, rows, list(rows[0].keys()))


def _grid_from_config(cfg: RunConfig) -> models.GridSpace:
    g = cfg.grid
    return models.GridSpace(
        n_points=int(g.get("n_points", 256)),
        length=float(g.get("length", 1.0)),
        hbar=float(g.get("hbar", cfg.hbar)),
    )


def _grid_model_quantities(cfg: RunConfig, which: str) -> dict:
    grid = _grid_from_config(cfg)
    length = grid.length
    probe_width = float(cfg.grid.get("probe_width", length / 20))
    object_width = float(cfg.params.get("object_width", length / 22))
    object_center = float(cfg.params.get("object_center", 0.0))
    xi = models.gaussian_wavefunction(grid, 0.0, probe_width)
    psi = models.gaussian_wavefunction(grid, object_center, object_width)
    rho = linops.DensityState.pure(psi)
    if which == "von-neumann":
        inst = models.von_neumann_instrument(grid, xi)
    else:
        inst = models.contractive_instrument(grid, xi)
    x_op, p_op = grid.x_op, grid.p_op
    povm = instruments.povm_of_instrument(inst)
    eps = errdist.rms_noise(povm, x_op, rho, method="formula")
    eta = errdist.rms_disturbance(inst, p_op, rho, method="formula")
    rhs = errdist.commutator_bound(x_op, p_op, rho)
    sigma_x = linops.std_dev(x_op.op, rho.op)
    sigma_p = linops.std_dev(p_op.op, rho.op)
    return {
        "grid": grid, "inst": inst, "povm": povm, "rho": rho,
        "epsilon": eps, "eta": eta, "product": eps * eta, "rhs": rhs,
        "sigma_x": sigma_x, "sigma_p": sigma_p,
        "universal_lhs": eps * eta + eps * sigma_p + sigma_x * eta,
        "defect_probe": grid.commutator_defect(xi),
        "defect_object": grid.commutator_defect(psi),
        "probe_width": probe_width, "object_width": object_width,
    }


def _exp_vn_model(cfg: RunConfig) -> Report:
    q = _grid_model_quantities(cfg, "von-neumann")
    margin = q["product"] - q["rhs"]
    row = {
        "epsilon": q["epsilon"], "eta": q["eta"], "product": q["product"],
        "rhs": q["rhs"], "margin": margin,
        "heisenberg_holds": margin >= -cfg.tol("grid"),
        "universal_lhs": q["universal_lhs"],
        "universal_holds": q["universal_lhs"] >= q["rhs"] - cfg.tol("relation"),
        "defect_probe": q["defect_probe"], "defect_object": q["defect_object"],
    }
    violations = int(not row["heisenberg_holds"]) + int(not row["universal_holds"])
    summary = {
        "violations": violations,
        "epsilon": q["epsilon"], "eta": q["eta"],
        "heisenberg_margin": margin,
        "n_points": q["grid"].n_points,
    }
    return Report("vn-model", cfg.to_dict(), summary, [row], list(row.keys()))


def _exp_contractive_model(cfg: RunConfig) -> Report:
    q = _grid_model_quantities(cfg, "contractive")
    hbar = q["grid"].hbar
    row = {
        "epsilon": q["epsilon"], "epsilon_exactly_zero": q["epsilon"] == 0.0,
        "eta": q["eta"], "product": q["product"], "rhs": q["rhs"],
        "rhs_above_049_hbar": q["rhs"] >= 0.49 * hbar,
        "heisenberg_holds": q["product"] >= q["rhs"] - cfg.tol("relation"),
        "universal_lhs": q["universal_lhs"],
        "universal_holds": q["universal_lhs"] >= q["rhs"] - cfg.tol("relation"),
        "defect_probe": q["defect_probe"], "defect_object": q["defect_object"],
    }
    ok = (row["epsilon_exactly_zero"] and row["rhs_above_049_hbar"]
          and not row["heisenberg_holds"] and row["universal_holds"])
    summary = {
        "violations": 0 if ok else 1,
        "epsilon": q["epsilon"],
        "heisenberg_holds": row["heisenberg_holds"],
        "universal_holds": row["universal_holds"],
        "n_points": q["grid"].n_points,
    }
    return Report("contractive-model", cfg.to_dict(), summary, [row], list(row.keys()))


def _exp_heisenberg_demo(cfg: RunConfig) -> Report:
    report = _exp_contractive_model(cfg)
    row = dict(report.rows[0])
    row["heisenberg_violated"] = not row.pop("heisenberg_holds")
    reproduced = row["heisenberg_violated"] and row["universal_holds"] and row["rhs"] > 0
    summary = {
        "violations": 0 if reproduced else 1,
        "heisenberg_violated": row["heisenberg_violated"],
        "universal_holds": row["universal_holds"],
    }
    return Report("heisenberg-violation-demo", cfg.to_dict(), summary, [row], list(row.keys()))


def _exp_way_audit(cfg: RunConfig) -> Report:
    trials = cfg.trials or 200
    spins = cfg.params.get("ancilla_spins", [1, 2, 3, 4])
    s_ops = conservation.spin_half_operators(cfg.hbar)

    def one(t):
        rng = _trial_rng(cfg.seed, t)
        n = int(spins[t % len(spins)])
        mp, l1, l2 = conservation.random_covariant_process(n, rng, hbar=cfg.hbar)
        a = models.random_observable(2, rng, scale=cfg.hbar)
        rho = models.random_density(2, rng)
        res = conservation.verify_way(mp, a, l1, l2, rho)
        return {
            "trial": t, "ancilla_spin_n": n,
            "conserved": res.conserved, "yanase": res.yanase,
            "epsilon_sq": res.epsilon_sq, "bound": res.bound,
            "margin": res.epsilon_sq - res.bound,
        }

    rows = _map_trials(one, trials)
    applicable = [r for r in rows if r["conserved"] and r["yanase"]]
    violations = sum(1 for r in applicable if r["margin"] < -cfg.tol("relation"))
    summary = {
        "trials": trials,
        "violations": violations,
        "applicable": len(applicable),
        "min_margin": min((r["margin"] for r in applicable), default=0.0),
    }
    return Report("way-audit", cfg.to_dict(), summary, rows, list(rows[0].keys()))


def _exp_yanase_bound(cfg: RunConfig) -> Report:
    trials = cfg.trials or 50
    spins = cfg.params.get("ancilla_spins", [0, 1, 2, 3, 4])
    n_states = int(cfg.params.get("sampled_states", 24))
    hbar = cfg.hbar
    sz = linops.spectral_decompose(conservation.spin_half_operators(hbar)[2])
    psi_y = np.array([1.0, 1.0j]) / np.sqrt(2)  # maximizes |<[S_z, S_x]>|

    def one(t):
        rng = _trial_rng(cfg.seed, t)
        n = int(spins[t % len(spins)])
        mp, l1, l2 = conservation.random_covariant_process(n, rng, hbar=hbar)
        sigma_l2 = linops.std_dev(l2.op, mp.probe_state.op)
        bound = conservation.yanase_bound(sigma_l2, hbar)
        states = [psi_y] + [(rng.standard_normal(2) + 1j * rng.standard_normal(2))
                            for _ in range(n_states - 1)]
        pe_max = 0.0
        for psi in states:
            rho = linops.DensityState.pure(psi)
            eps_sq = errdist.rms_noise(mp, sz, rho, method="direct") ** 2
            pe_max = max(pe_max, conservation.yanase_error_probability(eps_sq, hbar))
        return {
            "trial": t, "ancilla_spin_n": n, "sigma_l2": sigma_l2,
            "bound": bound, "pe_max": pe_max, "margin": pe_max - bound,
        }

    rows = _map_trials(one, trials)
    violations = sum(1 for r in rows if r["margin"] < -cfg.tol("relation"))
    summary = {
        "trials": trials,
        "violations": violations,
        "min_margin": min(r["margin"] for r in rows),
    }
    return Report("yanase-bound", cfg.to_dict(), summary, rows, list(rows[0].keys()))


def _exp_gate_infidelity(cfg: RunConfig) -> Report:
    spins = cfg.params.get("N", [0, 1, 2, 3, 4])
    if isinstance(spins, (int, float)):
        spins = [int(spins)]
    thetas = cfg.params.get("theta", [np.pi / 4, np.pi / 2, np.pi])
    if isinstance(thetas, (int, float)):
        thetas = [float(thetas)]
    per_cell = cfg.trials or 40
    with_cb = bool(cfg.params.get("cb_check", True))
    cb_starts = int(cfg.params.get("cb_starts", 4))
    cells = [(int(n), float(th)) for n in spins for th in thetas]

    def one(t):
        rng = _trial_rng(cfg.seed, t)
        n, theta = cells[t % len(cells)]
        impl = conservation.random_covariant_implementation(n, rng, hbar=cfg.hbar)
        axis = rng.standard_normal(3)
        target = conservation.GateTarget.from_angles(rng.uniform(0, 2 * np.pi), theta, axis)
        f, worst = conservation.gate_fidelity(impl, target)
        bound = conservation.gate_infidelity_bound(theta, n)
        infid = 1 - f * f
        row = {
            "seed": cfg.seed, "trial": t, "N": n, "theta": theta,
            "F": f, "bound": bound, "margin": infid - bound,
        }
        if with_cb:
            dcb = conservation.cb_distance_lower_bound(
                impl, target, n_starts=cb_starts, seed=int(rng.integers(1 << 31)),
                worst_state=worst)
            row["dcb_lower"] = dcb
            row["dcb_margin"] = dcb - infid
        return row

    rows = _map_trials(one, per_cell * len(cells))
    violations = sum(1 for r in rows if r["margin"] < -cfg.tol("relation"))
    if with_cb:
        violations += sum(1 for r in rows if r["dcb_margin"] < -cfg.tol("grid"))
    summary = {
        "trials": len(rows),
        "violations": violations,
        "min_margin": min(r["margin"] for r in rows),
    }
    if with_cb:
        summary["min_dcb_margin"] = min(r["dcb_margin"] for r in rows)
    return Report("gate-infidelity-audit", cfg.to_dict(), summary, rows, list(rows[0].keys()))


_BUILTIN_OPERATORS = {
    "pauli-x": conservation.PAULI_X,
    "pauli-y": conservation.PAULI_Y,
    "pauli-z": conservation.PAULI_Z,
}


def _parse_operator_table(spec: dict) -> dict:
    table = {}
    for name, val in spec.items():
        if isinstance(val, str):
            if val not in _BUILTIN_OPERATORS:
                raise UsageError(f"unknown builtin operator {val!r}")
            mat = _BUILTIN_OPERATORS[val]
        else:
            dim = int(round(np.sqrt(len(val))))
            mat = instruments._pairs_to_matrix(val, dim)
        table[name] = linops.spectral_decompose(mat)
    return table


def _parse_state(spec, dim: int) -> linops.DensityState:
    if spec is None or spec == "maximally-mixed":
        return linops.DensityState.maximally_mixed(dim)
    if isinstance(spec, dict) and "pure" in spec:
        vec = np.array([complex(re, im) for re, im in spec["pure"]])
        return linops.DensityState.pure(vec)
    return linops.DensityState(instruments._pairs_to_matrix(spec, dim))


def _exp_logic_eval(cfg: RunConfig) -> Report:
    ops_spec = cfg.params.get("operators", {"sz": "pauli-z", "sx": "pauli-x"})
    table = _parse_operator_table(ops_spec)
    prop_spec = cfg.params.get(
        "proposition", {"and": [{"atom": {"obs": "sz", "set": [1.0]}},
                               {"atom": {"obs": "sx", "set": [1.0, -1.0]}}]})
    prop = qlogic.parse_proposition(prop_spec, table)
    dim = next(iter(table.values())).dim
    rho = _parse_state(cfg.params.get("state"), dim)
    tv = qlogic.truth_value(prop)
    prob = qlogic.proposition_probability(prop, rho)
    row = {"rank": tv.rank, "dim": tv.dim, "probability": prob}
    summary = {"violations": 0, "rank": tv.rank, "probability": prob}
    return Report("logic-eval", cfg.to_dict(), summary, [row], list(row.keys()))


def _exp_simultaneity_demo(cfg: RunConfig) -> Report:
    sz, sx = conservation.PAULI_Z, conservation.PAULI_X
    eye = np.eye(2)
    z1 = linops.spectral_decompose(linops.tensor(sz, eye))
    x1 = linops.spectral_decompose(linops.tensor(sx, eye))
    z = linops.spectral_decompose(sz)
    x = linops.spectral_decompose(sx)
    singlet = linops.DensityState.pure(np.array([0, 1, -1, 0]) / np.sqrt(2))
    cases = [
        ("commuting pair", z1, linops.spectral_decompose(linops.tensor(eye, sz)),
         linops.DensityState.maximally_mixed(4), True),
        ("singlet non-commuting pair", z1, x1, singlet, True),
        ("incompatible full-rank pair", z, x, linops.DensityState.maximally_mixed(2), False),
    ]
    rows = []
    for name, a, b, rho, expected in cases:
        res = qlogic.is_simultaneously_measurable(a, b, rho)
        rows.append({
            "case": name, "flag": res.flag, "expected": expected,
            "certificate": res.certificate.get("kind"),
            "residual": res.certificate.get("residual"),
        })
    violations = sum(1 for r in rows if r["flag"] is not r["expected"])
    summary = {"violations": violations, "cases": len(rows)}
    return Report("simultaneity-demo", cfg.to_dict(), summary, rows, list(rows[0].keys()))


def _exp_realization_roundtrip(cfg: RunConfig) -> Report:
    trials = cfg.trials or 200
    dims = cfg.dims or [2, 3]

    def one(t):
        rng = _trial_rng(cfg.seed, t)
        d = int(dims[t % len(dims)])
        n_out = int(rng.integers(2, 4))
        kpo = int(rng.integers(1, 3))
        inst = models.random_cp_instrument(d, n_out, kpo, rng)
        mp = instruments.process_of_instrument(inst)
        back = instruments.instrument_of_process(mp)
        return {
            "trial": t, "dim": d, "outcomes": n_out, "kraus_per_outcome": kpo,
            "probe_dim": mp.probe_dim,
            "distance": instruments.instrument_distance(inst, back),
        }

    rows = _map_trials(one, trials)
    max_distance = max(r["distance"] for r in rows)
    violations = sum(1 for r in rows if r["distance"] >= cfg.tol("relation"))
    summary = {"trials": trials, "violations": violations, "max_distance": max_distance}
    return Report("realization-roundtrip", cfg.to_dict(), summary, rows, list(rows[0].keys()))


def _exp_cp_check(cfg: RunConfig) -> Report:
    trials = cfg.trials or 100
    rows = []
    flag, min_eig = instruments.is_completely_positive(instruments.transpose_instrument(2))
    rows.append({"trial": -1, "kind": "transpose-counterexample", "dim": 2,
                 "cp": flag, "min_choi_eigenvalue": min_eig})
    counterexample_ok = (not flag) and min_eig <= -0.4

    def one(t):
        rng = _trial_rng(cfg.seed, t)
        d = int(rng.integers(2, 4))
        inst = models.random_cp_instrument(d, int(rng.integers(2, 4)), int(rng.integers(1, 3)), rng)
        f, me = instruments.is_completely_positive(instruments.dl_from_cp(inst))
        return {"trial": t, "kind": "kraus-instrument", "dim": d,
                "cp": f, "min_choi_eigenvalue": me}

    kraus_rows = _map_trials(one, trials)
    rows.extend(kraus_rows)
    violations = sum(1 for r in kraus_rows if not r["cp"]) + (0 if counterexample_ok else 1)
    summary = {
        "trials": trials,
        "violations": violations,
        "counterexample_min_eigenvalue": min_eig,
        "counterexample_flagged": not flag,
    }
    return Report("cp-check", cfg.to_dict(), summary, rows, list(rows[0].keys()))


EXPERIMENTS = {
    "ozawa-audit": _exp_ozawa_audit,
    "heisenberg-violation-demo": _exp_heisenberg_demo,
    "vn-model": _exp_vn_model,
    "contractive-model": _exp_contractive_model,
    "way-audit": _exp_way_audit,
    "yanase-bound": _exp_yanase_bound,
    "gate-infidelity-audit": _exp_gate_infidelity,
    "logic-eval": _exp_logic_eval,
    "simultaneity-demo": _exp_simultaneity_demo,
    "realization-roundtrip": _exp_realization_roundtrip,
    "cp-check": _exp_cp_check,
}

AUDIT_SUITES = {
    "ozawa": "ozawa-audit",
    "roundtrip": "realization-roundtrip",
    "cp-check": "cp-check",
    "way": "way-audit",
    "yanase": "yanase-bound",
    "gates": "gate-infidelity-audit",
}


def run_experiment(config: RunConfig) -> Report:
    return EXPERIMENTS[config.experiment](config)


def random_audit(suite: str, seed: int = 0, trials: int | None = None) -> Report:
    if suite not in AUDIT_SUITES:
        raise UsageError(f"unknown audit suite {suite!r}; known: {', '.join(sorted(AUDIT_SUITES))}")
    return run_experiment(RunConfig(experiment=AUDIT_SUITES[suite], seed=seed, trials=trials))


def _emit(report: Report, out_dir: str | None, want_json: bool, want_csv: bool) -> None:
    sys.stdout.write(report.json_body())
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        base = os.path.join(out_dir, report.experiment)
        if want_json:
            with open(base + ".json", "w") as fh:
                fh.write(report.json_body())
        if want_csv:
            with open(base + ".csv", "w") as fh:
                fh.write(report.csv_body())


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmtk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment from a JSON config")
    run_p.add_argument("--config", required=True, help="path to the JSON config")
    run_p.add_argument("--hbar", type=float, default=None, help="override hbar")
    run_p.add_argument("--out", default=None, help="directory for report artifacts")
    run_p.add_argument("--json", action="store_true", help="write the JSON report")
    run_p.add_argument("--csv", action="store_true", help="write the CSV rows")

    audit_p = sub.add_parser("audit", help="run a registered randomized audit")
    audit_p.add_argument("suite", help=f"one of: {', '.join(sorted(AUDIT_SUITES))}")
    audit_p.add_argument("--seed", type=int, default=0)
    audit_p.add_argument("--trials", type=int, default=None)
    audit_p.add_argument("--hbar", type=float, default=None)
    audit_p.add_argument("--out", default=None)
    audit_p.add_argument("--json", action="store_true")
    audit_p.add_argument("--csv", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            try:
                with open(args.config) as fh:
                    data = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config: {exc}") from exc
            config = RunConfig.from_dict(data)
            if args.hbar is not None:
                config.hbar = args.hbar
        else:
            if args.suite not in AUDIT_SUITES:
                raise UsageError(
                    f"unknown audit suite {args.suite!r}; known: {', '.join(sorted(AUDIT_SUITES))}")
            config = RunConfig(experiment=AUDIT_SUITES[args.suite],
                               seed=args.seed, trials=args.trials)
            if args.hbar is not None:
                config.hbar = args.hbar
        report = run_experiment(config)
    except UsageError as exc:
        print(f"qmtk: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (linops.QmtkError, ValueError) as exc:
        print(f"qmtk: diagnostic error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    want_json = args.json or not args.csv
    want_csv = args.csv or not args.json
    _emit(report, args.out, want_json, want_csv)
    return EXIT_OK if report.violations == 0 else EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
