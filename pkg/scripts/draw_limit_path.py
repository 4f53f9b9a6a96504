#!/usr/bin/env python3
"""Render a coupled family of limit-path approximations as SVG (plus CSV).

Depths share one random stream, so each drawing refines the previous one.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from gasket_lerw.harness import SvgStyle, emit_svg
from gasket_lerw.limit import sample_refined_family
from gasket_lerw.walker import replica_rng


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--depth", type=int, default=9)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--show-depths", type=int, nargs="+", default=None)
    parser.add_argument("--backdrop", type=int, default=None, help="wireframe generation")
    parser.add_argument("--out", default="limit_path", help="output prefix")
    args = parser.parse_args()

    family = sample_refined_family(args.depth, replica_rng(args.seed, 0))
    shown = args.show_depths or sorted({0, 2, 4, args.depth})
    style = SvgStyle(backdrop_level=args.backdrop)
    svg = emit_svg([family[m] for m in shown if m <= args.depth], style)
    Path(f"{args.out}.svg").write_text(svg)

    rows = ["t,x,y"]
    rows += [f"{t:.15g},{x:.15g},{y:.15g}" for t, x, y in family[-1].polyline()]
    Path(f"{args.out}.csv").write_text("\n".join(rows) + "\n")

    s1, s2 = family[-1].s_counts()
    print(f"depth {args.depth}: {s1 + s2} cells ({s1} one-visit, {s2} two-visit)")
    print(f"wrote {args.out}.svg (depths {shown}) and {args.out}.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
