"""Command line driver: ``weakcoupling <experiment> --config cfg.json --out dir``.

Exit codes: 0 all checks pass, 2 an audit failed, 1 execution or config error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import dynamics, generators, models, positivity, qfgr
from . import projections as pj

EXPERIMENTS = ("audit", "generator", "nz_residual", "sweep", "qfgr", "steady_scan")
MODEL_KINDS = ("explicit", "random", "quasi_continuum")

DEFAULT_TOLERANCES = {
    "gate": 1e-10,
    "cp": 1e-8,
    "tp": 1e-9,
    "projection": 1e-10,
    "trace_drift": 1e-8,
    "nz_residual": 1e-4,
}

EXIT_OK, EXIT_ERROR, EXIT_AUDIT = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class ScenarioConfig:
    model: dict
    projection: dict
    experiment: dict
    output: dict
    raw: dict = field(default_factory=dict)

    @property
    def seed(self):
        return int(self.model.get("seed", 0))

    @property
    def tolerances(self):
        return self.experiment["tolerances"]


# ---------------------------------------------------------------------------
# config parsing


def parse_matrix(obj, path):
    """Nested list of ``[re, im]`` pairs (or plain reals) to a complex array."""
    try:
        rows = []
        for row in obj:
            rows.append([complex(x[0], x[1]) if isinstance(x, (list, tuple)) else complex(x)
                         for x in row])
        M = np.array(rows, dtype=complex)
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError([f"{path}: not a matrix of [re, im] pairs ({exc})"]) from None
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError([f"{path}: expected a square matrix, got shape {M.shape}"])
    return M


def matrix_to_json(M):
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(M)]


def _range_problem(v, path, lo=None, hi=None, closed=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        return f"{path} must be a finite number"
    below = lo is not None and (v < lo if closed else v <= lo)
    above = hi is not None and (v > hi if closed else v >= hi)
    if below or above:
        lb, rb = ("[", "]") if closed else ("(", ")")
        return (f"{path} out of {lb}{lo if lo is not None else '-inf'},"
                f"{hi if hi is not None else 'inf'}{rb}")
    return None


def _number(d, key, path, problems, lo=None, hi=None, required=True):
    if key not in d:
        if required:
            problems.append(f"{path}.{key} missing")
        return None
    msg = _range_problem(d[key], f"{path}.{key}", lo, hi)
    if msg:
        problems.append(msg)
    return d[key]


def _validate(raw, experiment=None):
    problems = []
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be a JSON object"])
    model = raw.get("model")
    proj = raw.get("projection", {}) or {}
    exp = dict(raw.get("experiment", {}) or {})
    out = raw.get("output", {}) or {}
    if not isinstance(model, dict):
        raise ConfigError(["model missing"])

    kind = model.get("kind")
    if kind not in MODEL_KINDS:
        problems.append(f"model.kind must be one of {', '.join(MODEL_KINDS)}")
    if "seed" in model and (not isinstance(model["seed"], int) or model["seed"] < 0):
        problems.append("model.seed must be a non-negative integer")
    if kind == "explicit":
        for key in ("H0", "Hp"):
            if key not in model:
                problems.append(f"model.{key} missing")
    if kind == "random":
        _number(model, "dim", "model", problems, lo=1)
    if kind == "quasi_continuum":
        _number(model, "n_bath", "model", problems, lo=1, required=False)
        _number(model, "width", "model", problems, lo=0, required=False)
        _number(model, "beta", "model", problems, lo=0, required=False)

    pkind = proj.get("kind")
    if kind == "quasi_continuum":
        if pkind not in (None, "partial_trace"):
            problems.append("projection.kind must be partial_trace for quasi_continuum models")
    elif pkind not in [k.value for k in pj.ProjectionKind if k is not pj.ProjectionKind.CUSTOM]:
        problems.append("projection.kind must be one of partial_trace, diagonal, "
                        "block_diagonal, entangling")
    if kind == "explicit":
        if pkind == "partial_trace":
            for key in ("dim_A", "dim_B", "sigma"):
                if key not in proj:
                    problems.append(f"projection.{key} missing")
        if pkind == "block_diagonal" and "index_sets" not in proj:
            problems.append("projection.index_sets missing")
        if pkind == "entangling":
            for key in ("dim_A", "C", "D"):
                if key not in proj:
                    problems.append(f"projection.{key} missing")

    if experiment is not None:
        if "kind" in exp and exp["kind"] != experiment:
            problems.append(f"experiment.kind is {exp['kind']!r} but the {experiment} "
                            "subcommand was invoked")
        exp["kind"] = experiment
    ekind = exp.get("kind")
    if ekind not in EXPERIMENTS:
        problems.append(f"experiment.kind must be one of {', '.join(EXPERIMENTS)}")

    lams = exp.get("lambdas", [0.3])
    if not isinstance(lams, list) or not lams:
        problems.append("experiment.lambdas must be a non-empty list")
    else:
        for i, lam in enumerate(lams):
            msg = _range_problem(lam, f"experiment.lambdas[{i}]", 0, 1)
            if msg:
                problems.append(msg)
    if ekind == "sweep":
        _number(exp, "xi", "experiment", problems, lo=0, hi=2)
        _number(exp, "tau_bar", "experiment", problems, lo=0)
        tt = exp.get("T_tilde", "collision")
        if tt != "collision":
            _number(exp, "T_tilde", "experiment", problems, lo=0)
        if isinstance(lams, list) and len(lams) > 1:
            mags = [abs(x) for x in lams if isinstance(x, (int, float))]
            if any(b >= a for a, b in zip(mags, mags[1:])):
                problems.append("experiment.lambdas must be strictly decreasing")
    if "davies_eps" in exp:
        _number(exp, "davies_eps", "experiment", problems, lo=0)
    if "n_points" in exp:
        n = exp["n_points"]
        if not isinstance(n, int) or n < 16:
            problems.append("experiment.n_points must be an integer >= 16")
    for key in ("T_grid", "t_grid"):
        if key in exp:
            g = exp[key]
            if not isinstance(g, list) or not g:
                problems.append(f"experiment.{key} must be a non-empty list")
                continue
            for i, v in enumerate(g):
                if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) \
                        or v < 0 or (key == "T_grid" and v == 0):
                    problems.append(f"experiment.{key}[{i}] must be a "
                                    f"{'positive' if key == 'T_grid' else 'non-negative'} number")
    tols = dict(DEFAULT_TOLERANCES)
    for k, v in (exp.get("tolerances") or {}).items():
        if k not in DEFAULT_TOLERANCES:
            problems.append(f"experiment.tolerances.{k} is not a known tolerance")
        elif isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
            problems.append(f"experiment.tolerances.{k} must be positive")
        else:
            tols[k] = float(v)
    exp["tolerances"] = tols
    if problems:
        raise ConfigError(problems)
    return ScenarioConfig(dict(model), dict(proj), exp, dict(out), raw)


def load_config(path, experiment=None):
    """Read and validate a JSON scenario; raises :class:`ConfigError` listing field paths."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError([f"config file {path} not found"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config parse error: {exc}"]) from None
    return _validate(raw, experiment)


# ---------------------------------------------------------------------------
# model construction


def _projection_from_config(proj, H0):
    kind = pj.ProjectionKind(proj["kind"])
    d = H0.shape[0]
    if kind is pj.ProjectionKind.PARTIAL_TRACE:
        sigma = parse_matrix(proj["sigma"], "projection.sigma")
        return pj.partial_trace_projection(int(proj["dim_A"]), int(proj["dim_B"]), sigma)
    if kind is pj.ProjectionKind.DIAGONAL:
        basis = proj.get("basis", "identity")
        if basis == "identity":
            U = np.eye(d)
        elif basis == "H0":
            U = np.linalg.eigh(H0)[1]
        else:
            U = parse_matrix(basis, "projection.basis")
        return pj.diagonal_projection(U)
    if kind is pj.ProjectionKind.BLOCK_DIAGONAL:
        return pj.block_diagonal_projection(proj["index_sets"], d)
    fam = pj.EntanglingFamily(
        [parse_matrix(c, f"projection.C[{i}]") for i, c in enumerate(proj["C"])],
        [parse_matrix(x, f"projection.D[{i}]") for i, x in enumerate(proj["D"])])
    return pj.entangling_projection(fam, int(proj["dim_A"]))


def build_model(cfg, check_gates=True):
    """``(H0, Hp, projection, gate_reports)`` for a validated config."""
    m = cfg.model
    if m["kind"] == "quasi_continuum":
        mod = models.quasi_continuum_model(
            seed=cfg.seed, n_bath=int(m.get("n_bath", 60)), width=float(m.get("width", 6.0)),
            beta=float(m.get("beta", 1.0)), levels=m.get("levels", "stratified"),
            coupling=m.get("coupling", "phase"))
        H0, Hp, P = mod.H0, mod.Hp, mod.projection
    elif m["kind"] == "random":
        extra = {k: proj_v for k, proj_v in cfg.projection.items()
                 if k in ("dim_A", "n_blocks", "n_parts", "beta")}
        mod = models.random_model(cfg.projection["kind"], cfg.seed, int(m["dim"]), **extra)
        H0, Hp, P = mod.H0, mod.Hp, mod.projection
    else:
        H0 = parse_matrix(m["H0"], "model.H0")
        Hp = parse_matrix(m["Hp"], "model.Hp")
        if H0.shape != Hp.shape:
            raise ConfigError([f"model.Hp shape {Hp.shape} differs from model.H0 {H0.shape}"])
        P = _projection_from_config(cfg.projection, H0)
    gates = []
    if check_gates:
        gates = pj.require_gates(P, H0, Hp, cfg.tolerances["gate"])
    return H0, Hp, P, gates


# ---------------------------------------------------------------------------
# experiments


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(x):
            raise FloatingPointError(f"non-finite value {x} in results")
        return repr(float(x))
    return str(x)


@dataclass
class Result:
    tables: dict = field(default_factory=dict)     # name -> (header, rows)
    extra: dict = field(default_factory=dict)      # name -> JSON payload
    audit_failed: bool = False
    provenance: dict = field(default_factory=dict)


def _T_grid(exp):
    return [float(T) for T in exp.get("T_grid", [1.0])]


def _run_audit(cfg, H0, Hp, P, gates, res):
    tol = cfg.tolerances
    rows = []
    for g in gates:
        rows.append((g.name, g.residual, "pass" if g.passed else "fail"))
    for c in pj.projection_audit(P, tol["projection"]).checks:
        rows.append((f"projection {c.name}", c.residual, "pass" if c.passed else "fail"))
    t_grid = [float(t) for t in cfg.experiment.get("t_grid", [0.1, 1.0, 10.0])]
    for lam in cfg.experiment.get("lambdas", [0.3]):
        for T in _T_grid(cfg.experiment):
            b = generators.build_generator(P, H0, Hp, lam, T, tol["gate"])
            if cfg.experiment.get("corrupt_dissipator", False):
                b = b.corrupted()
            a = positivity.cp_semigroup_audit(b, t_grid, tol["cp"], tol["tp"])
            for name, value, verdict in a.rows():
                rows.append((f"lambda={lam:g} T={T:g} {name}", value, verdict))
            eps = cfg.experiment.get("davies_eps")
            if eps is not None and P.sectors is not None:
                # contrast rows are informational: the damped Davies generator may fail
                c = positivity.davies_contrast(P, H0, Hp, lam, eps, T, tol["cp"])
                rows.append((f"lambda={lam:g} T={T:g} contrast davies eps={eps:g} conditional_cp",
                             c.davies_min_eig, "violated" if c.davies_fails else "holds"))
    res.tables["audit"] = (("check", "residual", "verdict"), rows)
    res.audit_failed = any(r[2] == "fail" for r in rows)


def _run_generator(cfg, H0, Hp, P, gates, res):
    out = []
    for lam in cfg.experiment.get("lambdas", [0.3]):
        for T in _T_grid(cfg.experiment):
            b = generators.build_generator(P, H0, Hp, lam, T, cfg.tolerances["gate"])
            gks = positivity.gks_canonical(b.reduced_generator, P.sectors.block_sizes) \
                if P.sectors is not None else None
            out.append({"lambda": lam, "T": T, "L_T": matrix_to_json(b.L_T),
                        "H2_T": matrix_to_json(b.H2_T),
                        "gks_min_eigenvalue": None if gks is None else gks.min_eigenvalue,
                        "provenance": b.provenance})
            if gks is not None and gks.min_eigenvalue < -cfg.tolerances["cp"]:
                res.audit_failed = True
    res.extra["generator"] = out


def _run_nz(cfg, H0, Hp, P, gates, res):
    exp = cfg.experiment
    t_max = float(exp.get("t_max", 4.0))
    rows = []
    for lam in exp.get("lambdas", [0.3]):
        for step in exp.get("steps", [0.01, 0.005]):
            r = dynamics.nz_residual(P, H0, Hp, lam, t_max, float(step))
            rows.append((lam, float(step), t_max, r))
    res.tables["nz_residual"] = (("lambda", "step", "t_max", "residual"), rows)
    res.audit_failed = any(r[3] > cfg.tolerances["nz_residual"] for r in rows
                           if r[1] <= 0.01 + 1e-15)


def _run_sweep(cfg, H0, Hp, P, gates, res):
    exp = cfg.experiment
    rep = dynamics.convergence_sweep(P, H0, Hp, exp["lambdas"], float(exp["xi"]),
                                     exp.get("T_tilde", "collision"), float(exp["tau_bar"]),
                                     int(exp.get("n_points", dynamics.DEFAULT_POINTS)),
                                     cfg.tolerances["gate"])
    res.tables["sweep"] = (("lambda", "T", "tau_bar", "sup_error"), rep.rows())
    res.extra["sweep"] = {"ratios": rep.ratios, "monotone_decreasing": rep.monotone_decreasing}
    res.audit_failed = not rep.monotone_decreasing


def _index_sets_of(P, d):
    if P.kind is pj.ProjectionKind.BLOCK_DIAGONAL:
        return P.metadata["index_sets"]
    if P.kind is pj.ProjectionKind.DIAGONAL and np.allclose(P.metadata["basis"], np.eye(d)):
        return [[k] for k in range(d)]
    raise ConfigError(["projection.kind must be block_diagonal (or diagonal in the "
                       "computational basis) for qfgr experiments"])


def _initial_state(cfg, d):
    init = cfg.experiment.get("initial_state")
    if init is not None:
        return parse_matrix(init, "experiment.initial_state")
    rng = np.random.default_rng(cfg.seed + 1)
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = X @ X.conj().T
    return rho / np.trace(rho).real


def _run_qfgr(cfg, H0, Hp, P, gates, res):
    exp = cfg.experiment
    d = H0.shape[0]
    sets = _index_sets_of(P, d)
    t_grid = [float(t) for t in exp.get("t_grid", np.linspace(0, 10, 21).tolist())]
    rows = []
    tol = cfg.tolerances
    for lam in exp.get("lambdas", [0.3]):
        T = _T_grid(exp)[0]
        system = qfgr.qfgr_system(H0, Hp, sets, T, lam)
        rho0 = qfgr.QuantumPopulations.from_density(_initial_state(cfg, d), sets)
        traj = qfgr.evolve_qfgr(rho0, system, t_grid)
        for s in traj.samples:
            for k, (tr, lo) in enumerate(zip(s.traces(), s.min_eigenvalues())):
                rows.append((s.time, k, float(tr), float(lo)))
        if traj.trace_drift() > tol["trace_drift"] or traj.min_eigenvalue() < -tol["cp"]:
            res.audit_failed = True
        if system.scat.diagonal_residual > tol["gate"]:
            res.audit_failed = True
    res.tables["qfgr"] = (("time", "block", "trace", "min_eig"), rows)


def _run_steady(cfg, H0, Hp, P, gates, res):
    exp = cfg.experiment
    sets = _index_sets_of(P, H0.shape[0])
    rows = []
    for lam in exp.get("lambdas", [0.3]):
        scan = qfgr.steady_state_scan(lambda T: qfgr.qfgr_system(H0, Hp, sets, T, lam),
                                      _T_grid(exp))
        for st in scan:
            for k, tr in enumerate(st.populations.traces()):
                rows.append((lam, st.T, k, float(tr), st.kernel_dim, st.residual))
    res.tables["steady_scan"] = (("lambda", "T", "block", "trace", "kernel_dim", "residual"),
                                 rows)


RUNNERS = {
    "audit": _run_audit,
    "generator": _run_generator,
    "nz_residual": _run_nz,
    "sweep": _run_sweep,
    "qfgr": _run_qfgr,
    "steady_scan": _run_steady,
}


def _write_outputs(out_dir, res):
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in res.tables.items():
        body = [[_fmt(x) for x in r] for r in rows]
        with open(out_dir / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(body)
    for name, payload in res.extra.items():
        with open(out_dir / f"{name}.json", "w") as fh:
            json.dump(payload, fh, indent=1, default=float, allow_nan=False)


def run_experiment(cfg, out_dir):
    """Run the configured experiment, write CSV/JSON artifacts, return the exit code."""
    out_dir = Path(out_dir)
    start = time.time()
    res = Result()
    partial, error, code = False, None, EXIT_OK
    try:
        H0, Hp, P, gates = build_model(cfg)
        RUNNERS[cfg.experiment["kind"]](cfg, H0, Hp, P, gates, res)
        _write_outputs(out_dir, res)
        code = EXIT_AUDIT if res.audit_failed else EXIT_OK
    except Exception as exc:  # every failure ends in a manifest and exit code 1
        partial, error, code = True, f"{type(exc).__name__}: {exc}", EXIT_ERROR
        try:
            _write_outputs(out_dir, res)
        except Exception:
            pass
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": cfg.raw,
        "experiment": cfg.experiment["kind"],
        "seed": cfg.seed,
        "versions": {"weakcoupling": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "tolerances": cfg.tolerances,
        "quadrature": {"method": "closed form (Gaussian and Dawson integrals)",
                       "achieved_tolerance": 0.0},
        "wall_time_s": time.time() - start,
        "partial": partial,
        "error": error,
        "exit_code": code,
        "outputs": sorted(f"{n}.csv" for n in res.tables) + sorted(f"{n}.json" for n in res.extra),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, default=str)
    return code


def _parser():
    p = argparse.ArgumentParser(prog="weakcoupling", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name.replace("_", "-"))
        sp.add_argument("--config", required=True, help="scenario JSON file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="override model.seed")
        sp.add_argument("--tol-scale", type=float, default=1.0,
                        help="multiply every tolerance (exploratory runs)")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    experiment = args.command.replace("-", "_")
    try:
        cfg = load_config(args.config, experiment)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError(["--seed must be non-negative"])
            cfg.model["seed"] = args.seed
        if not args.tol_scale > 0:
            raise ConfigError(["--tol-scale must be positive"])
        cfg.experiment["tolerances"] = {k: v * args.tol_scale for k, v in cfg.tolerances.items()}
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_ERROR
    code = run_experiment(cfg, args.out)
    if code == EXIT_ERROR:
        manifest = json.loads((Path(args.out) / "manifest.json").read_text())
        print(f"error: {manifest['error']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
