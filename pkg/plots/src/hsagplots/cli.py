"""Command line front end for figure regeneration from trace CSVs."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .figures import FigureSpec, RenderError, X_AXES, Y_METRICS, render


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hsag-plot", description=__doc__,
                                allow_abbrev=False)
    p.add_argument("traces", nargs="+", help="trace CSV paths or globs")
    p.add_argument("--metric", action="append", choices=Y_METRICS,
                   help="repeatable; default: rel_subopt and infeas_dist")
    p.add_argument("--x-axis", choices=X_AXES, default="iterations")
    p.add_argument("--linear-x", action="store_true")
    p.add_argument("--linear-y", action="store_true")
    p.add_argument("--overlay-theory", action="store_true")
    p.add_argument("--summary", help="summary.json for metadata and bounds")
    p.add_argument("--m-constraints", type=int,
                   help="constraint count when no summary is given")
    p.add_argument("--out", default="figure.png", help="output PNG/SVG path")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(sys.argv[1:] if argv is None else list(argv))
    try:
        spec = FigureSpec(
            trace_globs=args.traces,
            y_metrics=tuple(args.metric) if args.metric else ("rel_subopt", "infeas_dist"),
            x_axis=args.x_axis,
            log_x=not args.linear_x,
            log_y=not args.linear_y,
            overlay_theory=args.overlay_theory,
            summary_path=args.summary,
            m_constraints=args.m_constraints,
            out_path=args.out,
        )
        out = render(spec)
    except RenderError as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
