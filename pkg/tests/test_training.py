import math

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from topocf.errors import ConfigError, DataError
from topocf.graph import InteractionMatrix, split
from topocf.models import ModelConfig, build_model
from topocf.numerics import RngStream
from topocf.training import (Popularity, TrainConfig, evaluate, fit_and_evaluate, ndcg_at_k, recall_at_k,
                             sample_triples, top_k, train)

from conftest import bipartite_graphs


class FixedScores:
    trainable = False

    def __init__(self, S):
        self.S = np.asarray(S, dtype=float)

    def score_all(self, users):
        return self.S[np.asarray(users)]


def test_metric_definitions():
    ranked, rel = [5, 3, 9, 1], [3, 1, 7]
    assert recall_at_k(ranked, rel, 2) == pytest.approx(1 / 3)
    dcg = 1 / math.log2(3) + 1 / math.log2(5)
    idcg = 1 + 1 / math.log2(3) + 1 / math.log2(4)
    assert ndcg_at_k(ranked, rel, 4) == pytest.approx(dcg / idcg)
    with pytest.raises(ValueError):
        recall_at_k(ranked, [], 3)


@given(st.lists(st.integers(0, 3), min_size=1, max_size=12), st.integers(1, 12))
def test_top_k_breaks_ties_by_index(scores, K):
    s = np.array([scores], dtype=float)
    expect = sorted(range(len(scores)), key=lambda i: (-scores[i], i))[:K]
    assert top_k(s, K)[0].tolist() == expect


def test_evaluate_masks_known_positives():
    train = InteractionMatrix.from_dense([[1, 0, 0, 0]])
    val = InteractionMatrix.from_dense([[0, 1, 0, 0]])
    test = InteractionMatrix.from_dense([[0, 0, 1, 0]])
    from topocf.graph import SplitDataset
    s = SplitDataset(train, val, test, "random", 0)
    m = evaluate(FixedScores([[9, 8, 1, 2]]), s, K=1)
    # item 0 and 1 are masked, so item 3 is ranked first and misses
    assert m.recall == 0.0
    m2 = evaluate(FixedScores([[9, 8, 3, 2]]), s, K=1)
    assert m2.recall == 1.0 and m2.ndcg == 1.0
    v = evaluate(FixedScores([[9, 8, 3, 2]]), s, K=1, target="validation")
    assert v.recall == 1.0


@given(bipartite_graphs(min_edges=2), st.integers(0, 1000))
def test_triples_are_valid(R, seed):
    try:
        t = sample_triples(R, 50, seed)
    except DataError:
        assert all(d in (0, R.n_items) for d in R.user_degrees)
        return
    D = R.dense()
    assert np.all(D[t.users, t.pos] == 1)
    assert np.all(D[t.users, t.neg] == 0)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(patience=300)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)


def test_training_is_reproducible_and_restores_best(planted):
    s = split(planted, seed=1).prune_cold()
    cfg = TrainConfig(lr=0.01, max_epochs=6, patience=2)
    mc = ModelConfig(kind="LightGCN", layers=2, embed_dim=8)
    a = fit_and_evaluate(mc, cfg, s, RngStream(5))
    b = fit_and_evaluate(mc, cfg, s, RngStream(5))
    assert a["metrics"].recall == b["metrics"].recall
    assert [r["total"] for r in a["result"].history] == [r["total"] for r in b["result"].history]
    res = a["result"]
    val = evaluate(a["model"], s, 20, target="validation").recall
    assert val == pytest.approx(res.best_score)
    assert res.best_epoch == 1 + int(np.argmax([r["val_recall@20"] for r in res.history]))


def test_early_stopping_counts_patience(planted):
    s = split(planted, seed=1).prune_cold()
    model = build_model(ModelConfig(kind="LightGCN", layers=1, embed_dim=4), s.train, 0)
    res = train(model, s, TrainConfig(lr=0.0, max_epochs=20, patience=3), RngStream(0))
    # lr = 0: nothing improves after epoch 1, so training stops after 1 + patience + 1 epochs
    assert res.stopped_early and res.epochs_run == 5 and res.best_epoch == 1


def test_closed_form_skips_training(planted):
    s = split(planted, seed=2).prune_cold()
    out = fit_and_evaluate(ModelConfig(kind="GFCF", svd_rank=4), TrainConfig(), s, RngStream(0))
    assert out["result"].epochs_run == 0
    assert out["metrics"].recall > evaluate(Popularity(s.train), s).recall


def test_popularity_scores_degree(small_graph):
    p = Popularity(small_graph)
    assert p.score_all([0, 1]).shape == (2, 5)
    assert p.score_all([0])[0].tolist() == small_graph.item_degrees.tolist()
