#!/usr/bin/env python3
"""Sweep the sign bias and record the conditional sign MI curve.

Reproduces the argmax-at-one-half experiment; the curve lands in a CSV
(pi, value, std_error) compatible with the CLI's optimize-pi output.

Example:
    python3 scripts/sign_bias_sweep.py trees/star.tree --grid 0.05 \
        --samples 100000 --seed 11 --out curve.csv
"""

import argparse
import sys

import lgtree as lg


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("tree_path")
    ap.add_argument("--grid", type=float, default=0.05)
    ap.add_argument("--samples", type=int, default=100000)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    tree = lg.load_tree(args.tree_path)
    best, curve = lg.optimize_pi(tree, args.grid, args.samples, args.seed)
    rows = ["pi,value,std_error"]
    for point, est in curve:
        label = ":".join(repr(p) for p in point) if len(point) > 1 else repr(point[0])
        rows.append(f"{label},{est.value!r},{est.std_error!r}")
    text = "\n".join(rows) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"# argmax: {best.as_dict()}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
