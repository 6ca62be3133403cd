"""Triple sampling, the training loop with early stopping, and ranking metrics."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import torch

from .errors import ConfigError, DataError, DivergedTraining
from .graph import InteractionMatrix, SplitDataset
from .models import Batch, GraphRecommender, ModelConfig, build_model
from .numerics import Adam, RngStream, as_generator

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    l2_reg: float = 1e-4
    batch_size: int = 1024
    max_epochs: int = 200
    patience: int = 10
    eval_K: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if not 0 <= self.patience < self.max_epochs:
            raise ConfigError("patience must satisfy 0 <= patience < max_epochs")
        if self.eval_K < 1:
            raise ConfigError("eval_K must be >= 1")
        if self.lr < 0 or self.l2_reg < 0:
            raise ConfigError("lr and l2_reg must be non-negative")


@dataclass(frozen=True, eq=False)
class Triples:
    users: np.ndarray
    pos: np.ndarray
    neg: np.ndarray

    def __len__(self):
        return int(self.users.size)

    def batches(self, size: int):
        for lo in range(0, len(self), size):
            sl = slice(lo, lo + size)
            yield Batch(torch.from_numpy(self.users[sl]), torch.from_numpy(self.pos[sl]),
                        torch.from_numpy(self.neg[sl]))


def sample_triples(train: InteractionMatrix, n: int, rng) -> Triples:
    """n triples (u, i, j): u uniform over users with at least one positive and
    one negative, i uniform in N_u, j uniform outside N_u by rejection."""
    gen = as_generator(rng)
    deg = train.user_degrees
    eligible = np.flatnonzero((deg > 0) & (deg < train.n_items))
    skipped = int(((deg > 0) & (deg >= train.n_items)).sum())
    if skipped:
        log.info("skipping %d users that interacted with every item", skipped)
    if eligible.size == 0:
        raise DataError("no user has both a positive and a negative item")
    users = eligible[gen.integers(eligible.size, size=n)]
    offs = (gen.random(n) * deg[users]).astype(np.int64)
    pos = train.csr.indices[train.csr.indptr[users] + offs].astype(np.int64)
    keys = np.sort(train.edge_users * train.n_items + train.edge_items)
    neg = gen.integers(train.n_items, size=n)
    bad = _is_edge(keys, users * train.n_items + neg)
    while bad.any():
        idx = np.flatnonzero(bad)
        neg[idx] = gen.integers(train.n_items, size=idx.size)
        bad[idx] = _is_edge(keys, users[idx] * train.n_items + neg[idx])
    return Triples(users.astype(np.int64), pos, neg.astype(np.int64))


def _is_edge(sorted_keys, q):
    k = np.searchsorted(sorted_keys, q)
    k = np.minimum(k, sorted_keys.size - 1)
    return sorted_keys[k] == q


# ----------------------------------------------------------------- metrics

@dataclass(frozen=True, eq=False)
class Metrics:
    K: int
    recall: float
    ndcg: float
    users: np.ndarray
    per_user_recall: np.ndarray
    per_user_ndcg: np.ndarray

    @property
    def n_users(self):
        return int(self.users.size)

    def to_dict(self) -> dict:
        return {"K": self.K, f"recall@{self.K}": self.recall, f"ndcg@{self.K}": self.ndcg,
                "evaluated_users": self.n_users}


def recall_at_k(ranked, relevant, K: int) -> float:
    """|top-K intersect relevant| / |relevant|."""
    relevant = set(int(x) for x in relevant)
    if not relevant:
        raise ValueError("no relevant items")
    return sum(1 for x in list(ranked)[:K] if int(x) in relevant) / len(relevant)


def ndcg_at_k(ranked, relevant, K: int) -> float:
    """Binary-gain NDCG with log2(rank + 1) discounts."""
    relevant = set(int(x) for x in relevant)
    if not relevant:
        raise ValueError("no relevant items")
    dcg = sum(1.0 / math.log2(r + 2) for r, x in enumerate(list(ranked)[:K]) if int(x) in relevant)
    idcg = sum(1.0 / math.log2(r + 2) for r in range(min(K, len(relevant))))
    return dcg / idcg


def top_k(scores: np.ndarray, K: int) -> np.ndarray:
    """Row-wise top-K item indices; ties resolved towards the smaller item index."""
    n_items = scores.shape[1]
    K = min(K, n_items)
    order = np.lexsort((np.broadcast_to(np.arange(n_items), scores.shape), -scores), axis=1) \
        if scores.shape[0] else np.empty((0, n_items), dtype=np.int64)
    return order[:, :K]


def _user_rows(m: InteractionMatrix, users):
    return [m.row(u) for u in users]


def evaluate(model, split: SplitDataset, K: int = 20, target: str = "test", batch_users: int = 512) -> Metrics:
    """Rank all items per user with known positives masked.

    ``target="test"`` masks train and validation positives; ``"validation"``
    masks train positives. Users without target items are excluded.
    """
    truth = split.test if target == "test" else split.validation
    masks = [split.train] + ([split.validation] if target == "test" else [])
    users = np.flatnonzero(truth.user_degrees > 0)
    rec, nd = np.zeros(users.size), np.zeros(users.size)
    disc = 1.0 / np.log2(np.arange(2, K + 2))
    for lo in range(0, users.size, batch_users):
        chunk = users[lo:lo + batch_users]
        s = model.score_all(chunk)
        s = s.detach().cpu().numpy() if torch.is_tensor(s) else np.asarray(s, dtype=float)
        s = s.astype(float, copy=True)
        for m in masks:
            for r, u in enumerate(chunk):
                s[r, m.row(u)] = -np.inf
        ranked = top_k(s, K)
        for r, u in enumerate(chunk):
            rel = truth.row(u)
            hit = np.isin(ranked[r], rel)
            k = lo + r
            rec[k] = hit.sum() / rel.size
            nd[k] = (hit * disc[:hit.size]).sum() / disc[:min(K, rel.size)].sum()
    if users.size == 0:
        return Metrics(K, float("nan"), float("nan"), users, rec, nd)
    return Metrics(K, float(rec.mean()), float(nd.mean()), users, rec, nd)


class Popularity:
    """Scores every item by its training degree."""

    kind = "Popularity"
    trainable = False

    def __init__(self, train: InteractionMatrix):
        self.pop = train.item_degrees.astype(float)

    def score_all(self, users=None):
        n = len(users) if users is not None else 1
        return np.tile(self.pop, (n, 1))


# ----------------------------------------------------------------- training

@dataclass
class TrainResult:
    model: object
    history: list
    best_epoch: int
    best_score: float
    epochs_run: int
    stopped_early: bool


def train(model: GraphRecommender, split: SplitDataset, config: TrainConfig, rng: Optional[RngStream] = None) -> TrainResult:
    """Adam on the summed loss components; keeps the best-validation state.

    Training stops once more than ``patience`` consecutive epochs fail to
    improve validation Recall@K (training loss is monitored when the
    validation set has no evaluable user).
    """
    if not model.trainable:
        return TrainResult(model, [], 0, float("nan"), 0, False)
    rng = rng if rng is not None else RngStream(config.seed)
    opt = Adam(model.parameters(), lr=config.lr)
    has_val = bool((split.validation.user_degrees > 0).any())
    best, best_state, best_epoch, bad = -math.inf, None, 0, 0
    history, stopped = [], False
    n_triples = split.train.n_edges
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        model.on_epoch_start(epoch)
        triples = sample_triples(split.train, n_triples, rng.derive("triples", epoch))
        sums, n_batches = {}, 0
        for batch in triples.batches(config.batch_size):
            opt.zero_grad()
            comps = model.loss(batch, config.l2_reg)
            total = sum(comps.values())
            if not torch.isfinite(total):
                raise DivergedTraining(f"non-finite loss at epoch {epoch}")
            total.backward()
            opt.step()
            for k, v in comps.items():
                sums[k] = sums.get(k, 0.0) + float(v.detach())
            sums["total"] = sums.get("total", 0.0) + float(total.detach())
            n_batches += 1
        row = {"epoch": epoch, **{k: v / n_batches for k, v in sums.items()}}
        model.eval()
        if has_val:
            m = evaluate(model, split, config.eval_K, target="validation")
            row[f"val_recall@{config.eval_K}"] = m.recall
            row[f"val_ndcg@{config.eval_K}"] = m.ndcg
            score = m.recall
        else:
            score = -row["total"]
        history.append(row)
        if score > best:
            best, best_epoch, bad = score, epoch, 0
            best_state = copy.deepcopy(model.state_dict())
        else:
            bad += 1
            if bad > config.patience:
                stopped = True
                break
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return TrainResult(model, history, best_epoch, best, len(history), stopped)


def fit_and_evaluate(model_config: ModelConfig, train_config: TrainConfig, split: SplitDataset,
                     rng: RngStream) -> dict:
    """Build, train (unless closed form) and test one model on one split."""
    model = build_model(model_config, split.train, rng.derive("model"))
    result = train(model, split, train_config, rng.derive("train"))
    m = evaluate(model, split, train_config.eval_K, target="test")
    return {"model": model, "result": result, "metrics": m}
