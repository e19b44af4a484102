"""Regenerate benchmark-style figures from solver trace CSVs.

The input contract is owned by the benchmark CLI: trace files carry the
fixed header

    k,wall_ms,f_value,F_value,rel_subopt,infeas_dist,beta_k,eta_k,
    f_samples,g_samples,l1_err_f,l1_err_g

with empty cells for absent diagnostics, and summary.json carries the
per-problem metadata plus optional theory-bound curves.  Rendering is
read-only over its inputs.
"""

from __future__ import annotations

import glob
import json
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

EXPECTED_HEADER = ("k", "wall_ms", "f_value", "F_value", "rel_subopt",
                   "infeas_dist", "beta_k", "eta_k", "f_samples", "g_samples",
                   "l1_err_f", "l1_err_g")

X_AXES = ("iterations", "constraint_epochs", "f_samples")
Y_METRICS = ("rel_subopt", "infeas_dist", "F_value", "l1_err_f", "l1_err_g")

METRIC_LABELS = {
    "rel_subopt": "relative suboptimality",
    "infeas_dist": "distance to feasibility",
    "F_value": "objective value",
    "l1_err_f": "smooth-table l1 error",
    "l1_err_g": "constraint-table l1 error",
}


class RenderError(RuntimeError):
    pass


@dataclass
class FigureSpec:
    trace_globs: Sequence[str]
    y_metrics: Sequence[str] = ("rel_subopt", "infeas_dist")
    x_axis: str = "iterations"
    log_x: bool = True
    log_y: bool = True
    overlay_theory: bool = False
    summary_path: Optional[str] = None
    m_constraints: Optional[int] = None
    out_path: str = "figure.png"

    def __post_init__(self):
        if not self.trace_globs:
            raise RenderError("at least one trace glob is required")
        if self.x_axis not in X_AXES:
            raise RenderError(f"unknown x axis {self.x_axis!r}")
        for metric in self.y_metrics:
            if metric not in Y_METRICS:
                raise RenderError(f"unknown metric {metric!r}")
        if not self.y_metrics:
            raise RenderError("at least one metric is required")


def _parse_cell(text: str) -> float:
    if text == "":
        return float("nan")
    return float(text)


def read_trace(path: str) -> dict[str, np.ndarray]:
    """Parse one trace CSV, validating the column contract."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise RenderError(f"{path}: empty trace file")
    header = tuple(lines[0].split(","))
    if header != EXPECTED_HEADER:
        extra = set(header) - set(EXPECTED_HEADER)
        missing = set(EXPECTED_HEADER) - set(header)
        offender = (extra or missing or {"column order"}).pop()
        raise RenderError(f"{path}: trace schema mismatch on {offender!r}")
    rows = [list(map(_parse_cell, line.split(","))) for line in lines[1:] if line]
    data = np.asarray(rows, dtype=np.float64)
    if data.size == 0:
        raise RenderError(f"{path}: trace has no rows")
    return {name: data[:, i] for i, name in enumerate(EXPECTED_HEADER)}


_SEED_PATTERN = re.compile(r"^(?P<prefix>.+)_seed\d+$")


def group_traces(paths: Sequence[str]) -> dict[str, list[str]]:
    """Group trace files into seed families by the <prefix>_seed<N> stem."""
    groups: dict[str, list[str]] = {}
    for path in sorted(paths):
        stem = Path(path).stem
        match = _SEED_PATTERN.match(stem)
        key = match.group("prefix") if match else stem
        groups.setdefault(key, []).append(path)
    return groups


def _x_values(trace: dict[str, np.ndarray], spec: FigureSpec, m: Optional[int]) -> np.ndarray:
    if spec.x_axis == "iterations":
        return trace["k"]
    if spec.x_axis == "f_samples":
        return trace["f_samples"]
    if m is None:
        raise RenderError("constraint_epochs needs m from summary.json or m_constraints")
    return trace["g_samples"] / float(m)


def _load_summary(spec: FigureSpec) -> Optional[dict]:
    if spec.summary_path is None:
        return None
    try:
        with open(spec.summary_path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise RenderError(f"cannot read summary: {exc}") from exc


def _theory_overlay(summary: Optional[dict], group_key: str, metric: str):
    """(k values, bound values) for the overlayable metrics, if available."""
    if summary is None or not summary.get("theory"):
        return None
    algo = group_key.rsplit("_", 1)[-1]
    curves = summary["theory"].get("curves", {}).get(algo)
    if curves is None:
        return None
    ks = np.asarray(curves["k"], dtype=np.float64)
    if metric == "infeas_dist":
        vals = curves.get("infeas_bound")
    elif metric == "rel_subopt":
        vals = curves.get("subopt_upper")
        f_star = summary.get("problem", {}).get("F_star")
        if vals is not None and f_star not in (None, 0):
            vals = [v / abs(f_star) if v is not None else None for v in vals]
    else:
        return None
    if vals is None or all(v is None for v in vals):
        return None
    arr = np.array([np.nan if v is None else float(v) for v in vals])
    return ks, arr


def render(spec: FigureSpec) -> str:
    """Draw one panel per metric (seed-mean line, min-max band, optional
    theory overlay) and write the figure to spec.out_path."""
    paths: list[str] = []
    for pattern in spec.trace_globs:
        paths.extend(glob.glob(pattern))
    if not paths:
        raise RenderError(f"no traces match {list(spec.trace_globs)!r}")
    groups = group_traces(paths)
    summary = _load_summary(spec)
    m = spec.m_constraints
    if m is None and summary is not None:
        m = summary.get("problem", {}).get("m")

    metrics = list(spec.y_metrics)
    fig, axes = plt.subplots(1, len(metrics), figsize=(5.2 * len(metrics), 4.0),
                             squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        drew_anything = False
        for key, files in sorted(groups.items()):
            traces = [read_trace(f) for f in files]
            column = [t[metric] for t in traces]
            if all(np.all(np.isnan(c)) for c in column):
                warnings.warn(f"metric {metric} absent in group {key}; skipped")
                continue
            xs = _x_values(traces[0], spec, m)
            stacked = np.vstack(column)
            mean = np.nanmean(stacked, axis=0) if len(files) > 1 else stacked[0]
            mask = ~np.isnan(mean)
            if spec.log_x:
                mask &= xs > 0
            ax.plot(xs[mask], mean[mask], label=key)
            if len(files) > 1:
                lo = np.nanmin(stacked, axis=0)
                hi = np.nanmax(stacked, axis=0)
                ax.fill_between(xs[mask], lo[mask], hi[mask], alpha=0.2)
            drew_anything = True
            if spec.overlay_theory:
                overlay = _theory_overlay(summary, key, metric)
                if overlay is not None:
                    ks, vals = overlay
                    good = ~np.isnan(vals)
                    if spec.x_axis == "iterations":
                        ax.plot(ks[good], vals[good], linestyle="--",
                                label=f"{key} bound")
        if not drew_anything:
            warnings.warn(f"nothing to draw for metric {metric}")
        if spec.log_x:
            ax.set_xscale("log")
        if spec.log_y:
            ax.set_yscale("log")
        ax.set_xlabel(spec.x_axis.replace("_", " "))
        ax.set_ylabel(METRIC_LABELS[metric])
        if drew_anything:
            ax.legend(fontsize=8)
        ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(spec.out_path, dpi=130)
    plt.close(fig)
    return spec.out_path
