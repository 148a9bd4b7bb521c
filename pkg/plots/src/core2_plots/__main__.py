"""python -m core2_plots <figure-kind> --in <csv> --out <png>"""

import argparse
import sys

from .render import FigureSpec, RenderError, render
from .schemas import FIGURE_KINDS


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="core2_plots", description=__doc__,
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("kind", choices=FIGURE_KINDS, help="figure kind")
    parser.add_argument("--in", dest="input", required=True, help="input CSV")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--title", default=None, help="figure title override")
    args = parser.parse_args(argv)
    try:
        out = render(FigureSpec(args.input, args.kind, args.out, title=args.title))
    except RenderError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"[core2_plots] {args.kind} -> {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
