"""Benchmark harness: build instances, sweep (algorithm, seed) runs, and
write traces plus a machine-readable summary.

Trace CSV contract (fixed column order, floats at 17 significant digits,
non-finite diagnostics left empty):

    k,wall_ms,f_value,F_value,rel_subopt,infeas_dist,beta_k,eta_k,
    f_samples,g_samples,l1_err_f,l1_err_g

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.  The environment variable HSAG_THREADS caps parallel runs.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import ConfigError, DataError, ProblemInstance
from . import problems as prob
from . import solver as sol

SCHEMA_VERSION = 1

CSV_COLUMNS = ("k", "wall_ms", "f_value", "F_value", "rel_subopt", "infeas_dist",
               "beta_k", "eta_k", "f_samples", "g_samples", "l1_err_f", "l1_err_g")
CSV_HEADER = ",".join(CSV_COLUMNS)
_INT_COLUMNS = {"k", "f_samples", "g_samples"}

PROBLEMS = ("synthetic", "mc-box", "mc-l1", "kmeans", "sparsest-cut")
ALGOS = (sol.V1, sol.V2, sol.HCGM)

DEFAULT_BETA0 = {
    "synthetic": 0.05,
    "mc-box": 10.0,
    "mc-l1": 10.0,
    "kmeans": 7.0,
    "sparsest-cut": 100.0,
}


@dataclass
class RunSpec:
    problem: str = "synthetic"
    algos: list = field(default_factory=lambda: [sol.V1])
    seeds: list = field(default_factory=lambda: [0])
    beta0: Optional[float] = None
    iters: int = 1000
    batch_f: int = 1
    batch_g: int = 1
    log_every: object = sol.GEOMETRIC
    out_dir: str = "hsag-out"
    fmt: str = "csv"
    diagnostics: bool = False
    zeta: float = 7000.0
    lam: float = 0.1
    tau: Optional[float] = None
    n_clusters: Optional[int] = None
    paper_trace_bound: bool = False
    data: Optional[str] = None
    test_data: Optional[str] = None
    mc_mode: Optional[str] = None
    synthetic_p: int = 20
    synthetic_m: int = 100
    synthetic_seed: int = 0
    reference_iters: Optional[int] = None

    def resolved_beta0(self) -> float:
        return self.beta0 if self.beta0 is not None else DEFAULT_BETA0[self.problem]


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); surface as ConfigError
        raise ConfigError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="hsag-bench", description=__doc__, allow_abbrev=False,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", help="JSON file with RunSpec fields; flags override")
    p.add_argument("--problem", choices=PROBLEMS)
    p.add_argument("--algo", action="append", choices=ALGOS,
                   help="repeatable: v1, v2, hcgm")
    p.add_argument("--seed", action="append", type=int, help="repeatable")
    p.add_argument("--beta0", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--batch-f", type=int, dest="batch_f")
    p.add_argument("--batch-g", type=int, dest="batch_g")
    p.add_argument("--log-every", dest="log_every",
                   help="positive integer or 'geometric'")
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--format", dest="fmt", choices=("csv", "jsonl"))
    p.add_argument("--diagnostics", action="store_true", default=None,
                   help="record estimator-table l1 errors at logged rows")
    p.add_argument("--zeta", type=float, help="nuclear norm bound")
    p.add_argument("--lambda", type=float, dest="lam", help="l1 weight")
    p.add_argument("--tau", type=float, help="psd trace bound")
    p.add_argument("--data", help="input dataset path")
    p.add_argument("--test-data", dest="test_data", help="held-out dataset path")
    return p


def parse_config(argv: Sequence[str]) -> RunSpec:
    """Build a RunSpec from flags, optionally layered over a JSON config file."""
    args = _build_parser().parse_args(list(argv))
    spec = RunSpec()
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                file_values = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad config file: {exc}") from exc
        for key, value in file_values.items():
            if not hasattr(spec, key):
                raise ConfigError(f"unknown config key {key!r}")
            setattr(spec, key, value)
    overrides = {
        "problem": args.problem, "beta0": args.beta0, "iters": args.iters,
        "batch_f": args.batch_f, "batch_g": args.batch_g, "out_dir": args.out_dir,
        "fmt": args.fmt, "zeta": args.zeta, "lam": args.lam, "tau": args.tau,
        "data": args.data, "test_data": args.test_data,
        "diagnostics": args.diagnostics,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(spec, key, value)
    if args.algo:
        spec.algos = list(args.algo)
    if args.seed:
        spec.seeds = list(args.seed)
    if args.log_every is not None:
        spec.log_every = args.log_every
    if isinstance(spec.log_every, str) and spec.log_every != sol.GEOMETRIC:
        try:
            spec.log_every = int(spec.log_every)
        except ValueError:
            raise ConfigError(f"bad --log-every value {spec.log_every!r}") from None
    _validate(spec)
    return spec


def _validate(spec: RunSpec) -> None:
    if spec.problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {spec.problem!r}")
    if not spec.algos:
        raise ConfigError("at least one algorithm is required")
    for algo in spec.algos:
        if algo not in ALGOS:
            raise ConfigError(f"unknown algorithm {algo!r}")
    if not spec.seeds:
        raise ConfigError("at least one seed is required")
    if spec.iters < 0:
        raise ConfigError("--iters must be non-negative")
    if spec.fmt not in ("csv", "jsonl"):
        raise ConfigError(f"unknown trace format {spec.fmt!r}")
    if spec.problem in ("mc-box", "mc-l1", "kmeans", "sparsest-cut") and not spec.data:
        raise ConfigError(f"MissingData: --data is required for problem {spec.problem}")
    if spec.problem == "mc-box" and spec.mc_mode == prob.MODE_PROX and sol.V2 in spec.algos:
        raise ConfigError(
            "conflict: algorithm v2 needs mc-box in 'separable' mode, "
            "but mc_mode is 'prox'")
    if spec.mc_mode is not None and spec.mc_mode not in (prob.MODE_PROX, prob.MODE_SEPARABLE):
        raise ConfigError(f"unknown mc_mode {spec.mc_mode!r}")


def build_instance(spec: RunSpec) -> ProblemInstance:
    """Construct the ProblemInstance selected by the run specification."""
    if spec.problem == "synthetic":
        ref_iters = spec.reference_iters if spec.reference_iters is not None else 20000
        return prob.build_synthetic_sdp(spec.synthetic_p, spec.synthetic_m,
                                        spec.synthetic_seed, reference_iters=ref_iters,
                                        reference_beta0=spec.resolved_beta0())
    if spec.problem in ("mc-box", "mc-l1"):
        data = prob.load_ratings(spec.data, spec.test_data)
        if spec.problem == "mc-l1":
            return prob.build_matrix_completion_l1(data, spec.zeta, spec.lam)
        mode = spec.mc_mode
        if mode is None:
            mode = prob.MODE_SEPARABLE if sol.V2 in spec.algos else prob.MODE_PROX
        return prob.build_matrix_completion_box(data, spec.zeta, mode=mode)
    if spec.problem == "kmeans":
        try:
            points = np.loadtxt(spec.data, ndmin=2)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read point cloud: {exc}") from exc
        return prob.build_kmeans_sdp(points=points, n_clusters=spec.n_clusters,
                                     tau=spec.tau,
                                     paper_trace_bound=spec.paper_trace_bound)
    if spec.problem == "sparsest-cut":
        return prob.build_sparsest_cut(prob.load_graph(spec.data))
    raise ConfigError(f"unknown problem {spec.problem!r}")


def _format_float(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return ""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), ".17g")


def _format_cell(name: str, x) -> str:
    if name in _INT_COLUMNS:
        return str(int(x))
    return _format_float(float(x))


def write_trace_csv(trace: sol.IterateTrace, path: Path) -> None:
    lines = [CSV_HEADER]
    cols = {name: trace.column(name) for name in CSV_COLUMNS}
    for i in range(len(trace)):
        lines.append(",".join(_format_cell(name, cols[name][i]) for name in CSV_COLUMNS))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_trace_jsonl(trace: sol.IterateTrace, path: Path) -> None:
    cols = {name: trace.column(name) for name in CSV_COLUMNS}
    with path.open("w", encoding="utf-8") as fh:
        for i in range(len(trace)):
            row = {}
            for name in CSV_COLUMNS:
                x = cols[name][i]
                if name in _INT_COLUMNS:
                    row[name] = int(x)
                else:
                    x = float(x)
                    row[name] = None if math.isnan(x) else x
            fh.write(json.dumps(row) + "\n")


def _json_safe(x):
    if isinstance(x, float):
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
    return x


def _solver_config(spec: RunSpec, algo: str, seed: int) -> sol.SolverConfig:
    return sol.SolverConfig(
        variant=algo,
        beta0=spec.resolved_beta0(),
        max_iters=spec.iters,
        batch_f=spec.batch_f,
        batch_g=spec.batch_g,
        seed=seed,
        log_every=spec.log_every,
        compute_l1_diagnostics=spec.diagnostics,
    )


def _one_run(inst: ProblemInstance, spec: RunSpec, algo: str, seed: int, out_dir: Path):
    cfg = _solver_config(spec, algo, seed)
    status = "ok"
    error = None
    try:
        trace = sol.run(inst, cfg)
    except sol.NumericError as exc:
        trace = exc.trace
        status = "numeric_failure"
        error = str(exc)
    suffix = "csv" if spec.fmt == "csv" else "jsonl"
    trace_path = out_dir / f"{spec.problem}_{algo}_seed{seed}.{suffix}"
    if spec.fmt == "csv":
        write_trace_csv(trace, trace_path)
    else:
        write_trace_jsonl(trace, trace_path)
    record = {
        "algo": algo,
        "seed": seed,
        "trace_file": trace_path.name,
        "status": status,
        "error": error,
        "final": {name: _json_safe(float(trace.last(name)))
                  for name in ("k", "f_value", "F_value", "rel_subopt",
                               "infeas_dist", "beta_k")},
        "f_samples": int(trace.last("f_samples")),
        "g_samples": int(trace.last("g_samples")),
    }
    return record, trace


def _seed_means(traces: list[sol.IterateTrace], column: str) -> list:
    stacked = np.vstack([t.column(column) for t in traces])
    means = np.full(stacked.shape[1], np.nan)
    counts = np.sum(~np.isnan(stacked), axis=0)
    has_data = counts > 0
    with np.errstate(invalid="ignore"):
        means[has_data] = np.nansum(stacked[:, has_data], axis=0) / counts[has_data]
    return [_json_safe(float(v)) for v in means]


def _theory_section(inst: ProblemInstance, spec: RunSpec, ks: np.ndarray) -> Optional[dict]:
    if inst.theory is None:
        return None
    tc = sol.complete_theory_constants(inst, inst.theory, spec.resolved_beta0())
    section = {"constants": {k: _json_safe(v) for k, v in tc.as_dict().items()}, "curves": {}}
    for algo in spec.algos:
        if algo not in (sol.V1, sol.V2):
            continue
        if algo == sol.V2 and inst.nonsmooth.kind != "separable":
            continue
        curve = {"k": [], "gap_bound": [], "subopt_upper": [], "infeas_bound": []}
        for k in ks:
            if k < 1:
                continue
            bounds = sol.theory_bound(tc, int(k), algo)
            curve["k"].append(int(k))
            curve["gap_bound"].append(_json_safe(bounds.gap_bound))
            curve["subopt_upper"].append(_json_safe(bounds.subopt_upper))
            curve["infeas_bound"].append(_json_safe(bounds.infeas_bound))
        section["curves"][algo] = curve
    return section


def run_benchmark(spec: RunSpec) -> dict:
    """Execute the sweep, write per-run traces and summary.json.

    Returns the summary dict; run failures are recorded per run and
    reflected in the process exit code by main().
    """
    inst = build_instance(spec)
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(algo, seed) for algo in spec.algos for seed in spec.seeds]
    workers = int(os.environ.get("HSAG_THREADS", "1"))
    results = {}
    t_start = time.perf_counter()
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_one_run, inst, spec, a, s, out_dir): (a, s)
                       for a, s in jobs}
            for fut in concurrent.futures.as_completed(futures):
                results[futures[fut]] = fut.result()
    else:
        for a, s in jobs:
            results[(a, s)] = _one_run(inst, spec, a, s, out_dir)
    records = [results[j][0] for j in jobs]
    per_algo = {}
    checkpoint_ks = None
    for algo in spec.algos:
        traces = [results[(algo, s)][1] for s in spec.seeds]
        ks = traces[0].column("k")
        checkpoint_ks = ks if checkpoint_ks is None else checkpoint_ks
        mean_infeas = _seed_means(traces, "infeas_dist")
        mean_rel = _seed_means(traces, "rel_subopt")
        per_algo[algo] = {
            "k": [int(v) for v in ks],
            "mean_infeas_dist": mean_infeas,
            "mean_rel_subopt": mean_rel,
            "mean_F_value": _seed_means(traces, "F_value"),
            "mean_smoothed_gap": _seed_means(traces, "smoothed_gap"),
            "f_samples": [int(v) for v in traces[0].column("f_samples")],
            "g_samples": [int(v) for v in traces[0].column("g_samples")],
            "slopes": {
                "infeas_loglog": _json_safe(sol.fit_loglog_slope(
                    ks, [v if v is not None else float("nan") for v in mean_infeas])),
                "rel_subopt_loglog": _json_safe(sol.fit_loglog_slope(
                    ks, [v if v is not None else float("nan") for v in mean_rel])),
            },
        }
    summary = {
        "schema_version": SCHEMA_VERSION,
        "problem": {
            "name": spec.problem,
            "instance": inst.name,
            "d": inst.d,
            "n": inst.n,
            "m": inst.m,
            "beta0": spec.resolved_beta0(),
            "iters": spec.iters,
            "batch_f": spec.batch_f,
            "batch_g": spec.batch_g,
            "reference": (inst.reference_solution.source
                          if inst.reference_solution is not None else "none"),
            "F_star": (_json_safe(inst.reference_solution.F_star)
                       if inst.reference_solution is not None else None),
        },
        "runs": records,
        "per_algo": per_algo,
        "theory": _theory_section(inst, spec, checkpoint_ks if checkpoint_ks is not None else np.array([])),
        "total_wall_s": time.perf_counter() - t_start,
    }
    with (out_dir / "summary.json").open("w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        spec = parse_config(argv)
        summary = run_benchmark(spec)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except sol.NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    failed = [r for r in summary["runs"] if r["status"] != "ok"]
    if failed:
        for r in failed:
            print(f"run {r['algo']} seed {r['seed']} failed: {r['error']}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
