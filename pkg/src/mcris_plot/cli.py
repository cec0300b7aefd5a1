"""Command-line renderer: results CSV in, figure file out."""
from __future__ import annotations

import argparse
import sys

from .figures import AXIS_LABELS, FigureSpec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mcris-plot", description="Render sweep results to a figure")
    parser.add_argument("--in", dest="input_csv", required=True,
                        help="results CSV from the experiment harness")
    parser.add_argument("--kind", required=True, choices=sorted(AXIS_LABELS),
                        help="sweep axis the CSV was produced with")
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    try:
        render(FigureSpec(input_csv=args.input_csv, kind=args.kind,
                          output_path=args.out))
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
