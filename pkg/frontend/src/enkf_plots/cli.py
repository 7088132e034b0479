"""One entry point per figure kind, each taking --in/--out paths."""

from __future__ import annotations

import argparse
import sys

from .figures import FigureSpec, SchemaError, render


def _run(kind, argv, multi_input=False):
    parser = argparse.ArgumentParser(prog=f"plot-{kind.replace('_', '-')}")
    parser.add_argument(
        "--in",
        dest="inputs",
        action="append",
        required=True,
        help="input CSV (repeat for figures that combine several)",
    )
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    if not multi_input and len(args.inputs) > 3:
        parser.error("too many inputs for this figure kind")
    try:
        meta = render(FigureSpec(kind=kind, inputs=args.inputs, output=args.out))
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if "slope" in meta:
        print(f"slope {meta['slope']:.6f}")
    print(f"wrote {args.out}")
    return 0


def convergence_main(argv=None):
    raise SystemExit(_run("convergence", argv, multi_input=True))


def poles_main(argv=None):
    raise SystemExit(_run("poles", argv))


def mse_scaling_main(argv=None):
    raise SystemExit(_run("mse_scaling", argv))


def compare_main(argv=None):
    raise SystemExit(_run("compare", argv))


def trajectories_main(argv=None):
    raise SystemExit(_run("trajectories", argv, multi_input=True))
