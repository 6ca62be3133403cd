"""Every model kind against popularity on a two-block planted graph.

The block structure is easy to learn, so any working model should clear the
popularity baseline by a wide margin.
"""

import argparse
import time

from topocf.graph import split
from topocf.models import KINDS, ModelConfig
from topocf.numerics import RngStream
from topocf.synthetic import planted_blocks
from topocf.training import Popularity, TrainConfig, evaluate, fit_and_evaluate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--models", default=",".join(KINDS))
    ap.add_argument("--max-epochs", type=int, default=100)
    ap.add_argument("--embed-dim", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    R = planted_blocks(200, 200, rng=args.seed)
    data = split(R, "random", (0.8, 0.1, 0.1), seed=args.seed).prune_cold()
    pop = evaluate(Popularity(data.train), data, K=20)
    print(f"{'Popularity':>10}  recall@20 {pop.recall:.4f}  ndcg@20 {pop.ndcg:.4f}")
    tc = TrainConfig(lr=0.005, max_epochs=args.max_epochs, patience=10, seed=args.seed)
    for kind in args.models.split(","):
        t0 = time.perf_counter()
        cfg = ModelConfig(kind=kind, embed_dim=args.embed_dim, svd_rank=args.embed_dim).resolved()
        res = fit_and_evaluate(cfg, tc, data, RngStream(args.seed))
        m = res["metrics"]
        print(f"{kind:>10}  recall@20 {m.recall:.4f}  ndcg@20 {m.ndcg:.4f}  "
              f"epochs {res['result'].epochs_run:>3}  {time.perf_counter() - t0:6.1f}s"
              + ("" if m.recall > pop.recall else "  (below popularity)"))


if __name__ == "__main__":
    main()
