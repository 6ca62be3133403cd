"""Print the 11 characteristics of an interaction file (or a synthetic graph) with raw and transformed values.

    python3 scripts/profile_dataset.py data.tsv --kcore 10
    python3 scripts/profile_dataset.py --synthetic scale_free
"""

import argparse

from topocf.characteristics import profile
from topocf.graph import build_matrix, kcore_filter, load_interactions
from topocf.synthetic import planted_blocks, scale_free


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("path", nargs="?")
    ap.add_argument("--format", choices=("tsv", "csv"))
    ap.add_argument("--kcore", type=int)
    ap.add_argument("--d-min", type=int)
    ap.add_argument("--synthetic", choices=("scale_free", "planted"))
    args = ap.parse_args()
    if args.synthetic == "scale_free":
        R = scale_free(rng=0)
    elif args.synthetic == "planted":
        R = planted_blocks(rng=0)
    elif args.path:
        R, _ = build_matrix(load_interactions(args.path, args.format))
    else:
        ap.error("give a path or --synthetic")
    if args.kcore:
        R = kcore_filter(R, args.kcore)
    d_min = args.d_min or args.kcore or 1
    p = profile(R, d_min=d_min)
    print(f"{R.n_users} users, {R.n_items} items, {R.n_edges} interactions")
    for label, raw, val in zip(p.record.labels, p.record.raw, p.record.values):
        print(f"{label:>12}  {raw:>14.6g}  {val:>10.6g}")
    fit = p.topology.power_law
    print(f"power-law exponent (d_min={fit.d_min}): " + (f"{fit.theta:.4f}" if fit.fitted else f"not fitted, {fit.reason}"))


if __name__ == "__main__":
    main()
