"""Command line entry point: solve, ensemble report and plot-data export.

Artifacts written by ``solve`` into the output directory:

``trace.csv``     one row per iteration, floats at 17 significant digits
``plan.csv``      final plan, one row per edge
``summary.json``  final and oracle objectives, relative gap, timing, resolved config
``error.json``    written instead of a summary when the solver fails

Exit codes: 0 success, 1 solver failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .admm import ADMMConfig, admm_solve
from .config import ExperimentConfig, load_config, write_config
from .diagnostics import TheoryParams, estimate_xi, theorem1_report
from .errors import ConfigError, FedOTError, MaxIterationsExceeded
from .fedlearn import FLTrace, fl_run
from .instance import Instance
from .oracle import (MAX_BRUTE_FORCE_EDGES, brute_force_solve, linear_program_solve,
                     nearest_optimal_plan, projected_gradient_solve)
from .utility import total_objective

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2


def fmt(v) -> str:
    return format(float(v), ".17g")


def _write_csv(path: Path, header: list, rows, comment: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def oracle_solve(inst: Instance):
    """Central reference solution: brute force when tiny, else LP or projected gradient."""
    if inst.network.n_edges <= MAX_BRUTE_FORCE_EDGES:
        return brute_force_solve(inst)
    if inst.utility.is_linear:
        res = linear_program_solve(inst)
    else:
        res = projected_gradient_solve(inst)
    return res.plan, res.objective


# ------------------------------------------------------------------ traces


def fl_trace_rows(trace: FLTrace):
    types = [str(t) for t in trace.type_names]
    header = (["iteration", "sampled_type", "mu", "objective", "residual"]
              + [f"plan_{e}" for e in trace.edge_labels]
              + [f"received_{t}" for t in types]
              + [f"pdf_{t}" for t in types]
              + [f"avg_{e}" for e in trace.edge_labels]
              + ["mu1", "mu2"])
    rows = []
    for i in range(len(trace)):
        rows.append(
            [str(i + 1), str(trace.type_names[trace.sampled[i]]), fmt(trace.mu[i]),
             fmt(trace.objective[i]), fmt(trace.residual[i])]
            + [fmt(v) for v in trace.plan[i]]
            + [fmt(v) for v in trace.received[i]]
            + [fmt(v) for v in trace.pdf[i]]
            + [fmt(v) for v in trace.avg_plan[i]]
            + [fmt(trace.mu1[i]), fmt(trace.mu2[i])]
        )
    return header, rows


def admm_trace_rows(trace, inst: Instance):
    net = inst.network
    header = (["iteration", "objective", "residual", "primal_residual", "dual_residual"]
              + [f"plan_{e}" for e in net.edge_labels()]
              + [f"received_{t}" for t in net.type_names])
    rows = []
    for i in range(trace.iterations):
        plan = trace.plans[i]
        rows.append(
            [str(i + 1), fmt(trace.objective[i]), fmt(trace.violation[i]),
             fmt(trace.primal_residual[i]), fmt(trace.dual_residual[i])]
            + [fmt(v) for v in net.edge_values(plan)]
            + [fmt(v) for v in plan.sum(axis=1)]
        )
    return header, rows


def read_trace(path) -> dict:
    """Load a trace CSV into a dict of column arrays (``sampled_type`` stays text)."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        raise ValueError(f"{path}: empty trace file")
    data = list(reader)
    cols = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in data]
        cols[name] = vals if name == "sampled_type" else np.array(vals, dtype=float)
    return cols


def trace_from_columns(cols: dict, type_names, edge_labels) -> FLTrace:
    """Rebuild the parts of an :class:`FLTrace` needed by the bound report."""
    n = len(cols["iteration"])
    tr = FLTrace(tuple(type_names), list(edge_labels), np.zeros(0))
    tr.mu = list(cols["mu"])
    tr.mu1 = list(cols["mu1"])
    tr.mu2 = list(cols["mu2"])
    tr.objective = list(cols["objective"])
    tr.residual = list(cols["residual"])
    tr.avg_plan = [np.array([cols[f"avg_{e}"][i] for e in edge_labels]) for i in range(n)]
    tr.plan = [np.array([cols[f"plan_{e}"][i] for e in edge_labels]) for i in range(n)]
    tr.sampled = list(cols["sampled_type"])
    return tr


def emit_plot_data(trace, out_dir) -> list[Path]:
    """Write one CSV per figure panel from an FL trace object or a trace CSV path.

    Files: ``pdf.csv`` (empirical type distribution), ``plan_trajectory.csv``
    (per-edge plan), ``objective.csv`` and ``received.csv`` (per-type totals).
    Each starts with a ``#`` line describing the columns. Traces without
    sampling information (ADMM) produce no ``pdf.csv``.
    """
    if isinstance(trace, FLTrace):
        header, rows = fl_trace_rows(trace)
        cols = {h: [r[j] for r in rows] for j, h in enumerate(header)}
    else:
        cols = {k: ([fmt(v) for v in c] if isinstance(c, np.ndarray) else c)
                for k, c in read_trace(trace).items()}
        cols["iteration"] = [str(int(float(v))) for v in cols["iteration"]]
    n = len(cols.get("iteration", []))
    if n == 0:
        raise ValueError("cannot emit plot data for an empty trace")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    panels = [
        ("pdf.csv", "pdf_", "empirical probability of each type after each iteration"),
        ("plan_trajectory.csv", "plan_", "plan value on each edge (type_source) after each iteration"),
        ("objective.csv", None, "population-weighted total utility after each iteration"),
        ("received.csv", "received_", "total amount received by one node of each type after each iteration"),
    ]
    written = []
    for fname, prefix, desc in panels:
        names = ["objective"] if prefix is None else [h for h in cols if h.startswith(prefix)]
        if not names:
            continue
        header = ["iteration"] + names
        rows = [[cols["iteration"][i]] + [cols[h][i] for h in names] for i in range(n)]
        path = out_dir / fname
        _write_csv(path, header, rows, comment=f"columns: {', '.join(header)}; {desc}")
        written.append(path)
    return written


# --------------------------------------------------------------------- run


def _write_plan(path: Path, plan, inst: Instance) -> None:
    net = inst.network
    rows = [[str(net.type_names[x]), str(net.source_names[y]), fmt(plan[x, y])] for x, y in net.edges]
    _write_csv(path, ["type", "source", "value"], rows)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_jsonable) + "\n", encoding="utf-8")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def run(cfg: ExperimentConfig) -> int:
    """Execute the configured solver and write artifacts; returns the exit code."""
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    for stale in ("summary.json", "error.json"):
        (out / stale).unlink(missing_ok=True)
    inst = cfg.instance()
    # final-time distribution: the one generating samples at the last iteration
    final_dist = inst.dist
    if cfg.solver == "federated" and cfg.shifts:
        late = [s for s in cfg.shift_events() if s.at_iteration < cfg.iterations]
        if late:
            final_dist = max(late, key=lambda s: s.at_iteration).new_distribution

    summary = {"solver": cfg.solver, "seed": cfg.seed, "name": cfg.name}
    t0 = time.perf_counter()
    try:
        if cfg.solver == "admm":
            acfg = ADMMConfig(cfg.eta, cfg.max_iterations, cfg.primal_tol, cfg.dual_tol)
            plan, trace = admm_solve(inst.network, inst.utility, inst.bounds, inst.dist, acfg, keep_plans=True)
            header, rows = admm_trace_rows(trace, inst)
            summary.update(iterations=trace.iterations, converged=trace.converged,
                           primal_residual=trace.primal_residual[-1], dual_residual=trace.dual_residual[-1])
        elif cfg.solver == "federated":
            plan, trace = fl_run(inst, cfg.schedule, cfg.iterations, seed=cfg.seed,
                                 shifts=cfg.shift_events(), n_est=cfg.n_est)
            header, rows = fl_trace_rows(trace)
            summary.update(iterations=cfg.iterations, final_pdf=trace.pdf[-1],
                           final_received=trace.received[-1], final_residual=trace.residual[-1])
        else:
            plan, _ = oracle_solve(inst)
            net = inst.network
            header = (["iteration", "objective", "residual"] + [f"plan_{e}" for e in net.edge_labels()]
                      + [f"received_{t}" for t in net.type_names])
            rows = [["1", fmt(total_objective(plan, inst.utility, inst.dist)), fmt(0.0)]
                    + [fmt(v) for v in net.edge_values(plan)] + [fmt(v) for v in plan.sum(axis=1)]]
            summary.update(iterations=1)
    except (FedOTError, ArithmeticError, ValueError) as e:
        err = {"error": type(e).__name__, "message": str(e), "solver": cfg.solver, "seed": cfg.seed}
        if isinstance(e, MaxIterationsExceeded) and e.plan is not None:
            err["best_plan"] = e.plan
        _write_json(out / "error.json", err)
        return EXIT_SOLVER
    wall = time.perf_counter() - t0

    _write_csv(out / "trace.csv", header, rows)
    _write_plan(out / "plan.csv", plan, inst)

    obj = total_objective(plan, inst.utility, final_dist)
    summary.update(final_objective=obj, wall_time_s=wall)
    if cfg.compare_oracle:
        oplan, oobj = oracle_solve(inst.with_distribution(final_dist))
        summary.update(oracle_objective=oobj,
                       relative_gap=(oobj - obj) / abs(oobj) if oobj != 0 else obj - oobj)
    summary["config"] = cfg.to_dict()
    _write_json(out / "summary.json", summary)
    return EXIT_OK


def run_ensemble(cfg: ExperimentConfig, runs: int) -> int:
    """Independent runs with seeds ``seed + i`` into ``<out>/run_<i>``."""
    code = EXIT_OK
    base = cfg.out_dir
    for i in range(runs):
        sub = cfg.replace(seed=cfg.seed + i, out=str(base / f"run_{i:03d}"))
        write_config(sub, Path(sub.out) / "config.json")
        code = max(code, run(sub))
    return code


# ------------------------------------------------------------------ report


def ensemble_report(ens_dir, checkpoints=None, xi_samples: int = 200) -> dict:
    """Bound report over every ``run_*`` directory holding a federated trace."""
    ens_dir = Path(ens_dir)
    run_dirs = sorted(p for p in ens_dir.iterdir() if (p / "trace.csv").exists() and (p / "config.json").exists())
    if not run_dirs:
        raise ValueError(f"{ens_dir}: no run directories with trace.csv and config.json")
    cfg = load_config(run_dirs[0] / "config.json")
    inst = cfg.instance()
    net = inst.network
    traces = [trace_from_columns(read_trace(d / "trace.csv"), net.type_names, net.edge_labels())
              for d in run_dirs]

    plan0 = net.zero_plan()
    oplan, oobj = oracle_solve(inst)
    star = nearest_optimal_plan(plan0, inst, oobj) if inst.utility.is_linear else oplan
    params = TheoryParams(
        xi=estimate_xi(inst, xi_samples, np.random.default_rng(cfg.seed)),
        L_sum=inst.utility.lipschitz_sum,
        r0=float(np.linalg.norm(plan0 - star)),
        F_star=-oobj / inst.dist.population,
    )
    reports = theorem1_report(traces, params, inst, checkpoints)
    out = {
        "runs": len(traces),
        "params": vars(params),
        "convention": "gap is per-node cost F = -objective/N; gap_total multiplies by N",
        "checkpoints": [vars(r) for r in reports],
    }
    _write_json(ens_dir / "report.json", out)
    return out


# --------------------------------------------------------------------- CLI


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedot", description="Distributed and federated transport-plan solvers")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run one experiment (or an ensemble)")
    s.add_argument("--config", required=True, help="path to a JSON config, or a bundled name like case1")
    s.add_argument("--solver", choices=["admm", "federated", "oracle"])
    s.add_argument("--seed", type=int)
    s.add_argument("--iterations", type=int)
    s.add_argument("--out", help="output directory")
    s.add_argument("--runs", type=int, default=1, help="ensemble size; seeds are seed+i")

    r = sub.add_parser("report", help="bound report over an ensemble directory")
    r.add_argument("--ensemble", required=True)
    r.add_argument("--checkpoints", type=int, nargs="*")

    d = sub.add_parser("plot-data", help="split a trace into per-panel CSV files")
    d.add_argument("--trace", required=True)
    d.add_argument("--out", required=True)
    return p


def bundled_config(name: str) -> Path:
    from importlib import resources

    return Path(str(resources.files("fedot") / "data" / f"{name}.json"))


def _resolve_config(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    cand = bundled_config(arg)
    if cand.exists():
        return cand
    raise ConfigError(f"config {arg!r} not found (neither a file nor a bundled name)")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "solve":
        try:
            cfg = load_config(_resolve_config(args.config))
            changes = {k: v for k, v in (("solver", args.solver), ("seed", args.seed),
                                          ("iterations", args.iterations), ("out", args.out)) if v is not None}
            if changes:
                cfg = cfg.replace(**changes)
            if args.runs < 1:
                raise ConfigError("--runs must be >= 1")
        except (ConfigError, OSError) as e:
            print(f"config error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        code = run(cfg) if args.runs == 1 else run_ensemble(cfg, args.runs)
        where = cfg.out_dir
        print(f"{'ok' if code == EXIT_OK else 'solver failure'}: artifacts in {where}")
        return code
    if args.command == "report":
        try:
            rep = ensemble_report(args.ensemble, args.checkpoints)
        except (ValueError, OSError, ConfigError) as e:
            print(f"report error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"{'k':>7} {'gap':>12} {'lower':>12} {'upper':>12} {'upper(mu1)':>12} {'dist2':>12} {'feas.bound':>12}")
        for c in rep["checkpoints"]:
            print(f"{c['k']:>7} {c['gap']:>12.4g} {c['lower']:>12.4g} {c['upper']:>12.4g} "
                  f"{c['upper_mu1']:>12.4g} {c['dist2']:>12.4g} {c['feasibility']:>12.4g}")
        return EXIT_OK
    try:
        files = emit_plot_data(args.trace, args.out)
    except (ValueError, OSError, KeyError) as e:
        print(f"plot-data error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
