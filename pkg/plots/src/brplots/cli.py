"""CLI: brplots render --spec <file.json>"""

from __future__ import annotations

import argparse

from .figspec import FigureSpec
from .render import render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="brplots")
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("render", help="render a figure from a spec file")
    r.add_argument("--spec", required=True, help="JSON FigureSpec")
    args = parser.parse_args(argv)
    spec = FigureSpec.from_file(args.spec)
    for path in render(spec):
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
