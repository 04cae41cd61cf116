"""plotkit command line: render one recipe from a CSV bundle directory."""

from __future__ import annotations

import argparse
import sys

from .recipes import FIGURES, FigureRecipe, SchemaError
from .render import render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plotkit", description="Render figures from rydark CSV bundles")
    parser.add_argument("--recipe", required=True, choices=FIGURES)
    parser.add_argument("--input", default="results", help="bundle directory")
    parser.add_argument("--out", required=True,
                        help="output path base; .png and .svg are written")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        written = render(FigureRecipe(figure=args.recipe, input_dir=args.input, out=args.out))
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1
    print("wrote " + ", ".join(str(p) for p in written))
    return 0


if __name__ == "__main__":
    sys.exit(main())
