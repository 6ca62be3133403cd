import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from topocf.errors import DataError, MissingTimestamps, ZeroDegreeNode, ZeroRecords
from topocf.graph import (ITEM, USER, InteractionMatrix, build_matrix, graph_from_dict, graph_to_dict,
                          kcore_filter, load_graph, load_interactions, neighborhood, project, save_graph, split,
                          symmetric_normalize, write_interactions)

import oracles
from conftest import bipartite_graphs


def test_load_interactions_sniffs_and_counts_malformed(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("# comment\nalice,i1,5,10\nalice,i2\nbob,i1,,3\n,i9\nbob,i3,x\nalice,i1,4,2\n")
    s = load_interactions(p)
    assert s.malformed == 2
    keys = [(r.user, r.item) for r in s.records]
    assert keys == [("alice", "i1"), ("alice", "i2"), ("bob", "i1")]
    # the duplicate keeps its earliest timestamp
    assert s.records[0].timestamp == 2


def test_load_interactions_empty_and_missing(tmp_path):
    p = tmp_path / "e.tsv"
    p.write_text("# nothing\n\n")
    with pytest.raises(ZeroRecords):
        load_interactions(p)
    with pytest.raises(DataError):
        load_interactions(tmp_path / "missing.tsv")


def test_build_matrix_first_appearance_order(tmp_path):
    p = tmp_path / "x.tsv"
    p.write_text("u2\ta\nu1\tb\nu2\tb\n")
    R, ids = build_matrix(load_interactions(p))
    assert ids.users == ("u2", "u1") and ids.items == ("a", "b")
    assert R.dense().tolist() == [[1, 1], [0, 1]]


@given(bipartite_graphs(timestamps=True))
def test_from_edges_dedups_to_binary(R):
    eu, ei = R.edges()
    doubled = InteractionMatrix.from_edges(np.r_[eu, eu], np.r_[ei, ei], R.n_users, R.n_items,
                                           np.r_[R.timestamps, R.timestamps + 100])
    assert doubled == R
    assert set(np.unique(R.dense())) <= {0, 1}


@given(bipartite_graphs(), st.integers(1, 4))
def test_kcore_matches_networkx(R, k):
    out = kcore_filter(R, k)
    users, items, edges = oracles.kcore(R, k)
    assert sorted(out.user_labels.tolist()) == users
    assert sorted(out.item_labels.tolist()) == items
    eu, ei = out.edges()
    got = sorted(zip(out.user_labels[eu].tolist(), out.item_labels[ei].tolist()))
    assert got == edges
    if out.n_edges:
        assert out.user_degrees.min() >= k and out.item_degrees.min() >= k


def test_kcore_keeps_exact_degree_k():
    R = InteractionMatrix.from_dense(np.ones((2, 2)))
    assert kcore_filter(R, 2) == R
    assert kcore_filter(R, 3).is_empty()


@given(bipartite_graphs())
def test_symmetric_normalize(R):
    R = R.prune_isolates()
    W = symmetric_normalize(R).dense()
    du, di = R.dense().sum(1), R.dense().sum(0)
    expect = R.dense() / np.sqrt(np.outer(du, di))
    assert np.allclose(W, expect, atol=1e-12)


def test_normalize_rejects_isolates():
    R = InteractionMatrix.from_edges([0], [0], 2, 1)
    with pytest.raises(ZeroDegreeNode):
        symmetric_normalize(R)
    assert symmetric_normalize(R, allow_isolates=True).nnz == 1


@given(bipartite_graphs(), st.sampled_from([USER, ITEM]))
def test_projection_matches_brute_force(R, side):
    P = project(R, side)
    off, diag = oracles.projection(R, side)
    got = {(int(v), int(w)): int(c) for v, w, c in zip(*P.counts.nonzero(), P.counts.data)}
    assert got == off
    assert P.self_counts.tolist() == diag
    assert P.n_edges == len(off) // 2


@given(bipartite_graphs())
def test_neighborhood_two_hop(R):
    N = oracles.neighbor_sets(R, USER)
    for u in range(R.n_users):
        two = {w for w in range(R.n_users) if w != u and N[u] & N[w]}
        assert set(neighborhood(R, (USER, u), 2).tolist()) == two
        assert set(neighborhood(R, (USER, u), 1).tolist()) == N[u]


def test_neighborhood_bounds(small_graph):
    with pytest.raises(IndexError):
        neighborhood(small_graph, (USER, 9))


@given(bipartite_graphs(max_users=10, max_items=10), st.integers(0, 2**31))
def test_split_partitions_edges(R, seed):
    s = split(R, seed=seed)
    total = s.train.dense() + s.validation.dense() + s.test.dense()
    assert np.array_equal(total, R.dense())
    for u in range(R.n_users):
        n = int(R.user_degrees[u])
        nv, nt = int(s.validation.user_degrees[u]), int(s.test.user_degrees[u])
        if n < 3:
            assert nv == nt == 0
        else:
            assert nv == max(1, int(np.floor(n * 0.1 + 1e-9)))
            assert nt == max(1, int(np.floor(n * 0.1 + 1e-9)))
            assert s.train.user_degrees[u] >= 1


def test_split_is_seeded(planted):
    a, b = split(planted, seed=4), split(planted, seed=4)
    assert a.test == b.test and a.train == b.train
    assert split(planted, seed=5).test != a.test


def test_temporal_split_sends_latest_to_test():
    ts = np.array([5, 1, 3, 4, 2])
    R = InteractionMatrix.from_edges([0] * 5, range(5), 1, 5, ts)
    s = split(R, "temporal", (0.6, 0.2, 0.2))
    assert s.test.row(0).tolist() == [0]  # timestamp 5
    assert s.validation.row(0).tolist() == [3]  # timestamp 4
    with pytest.raises(MissingTimestamps):
        split(InteractionMatrix.from_dense(np.ones((1, 5))), "temporal")


def test_prune_cold_drops_items_without_training_edges():
    R = InteractionMatrix.from_dense(np.array([[1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0]]))
    s = split(R, seed=0).prune_cold()
    assert (s.train.item_degrees > 0).all()
    assert s.train.n_items == s.test.n_items == 8
    # with a single user every held-out item is cold
    assert s.test.n_edges == 0 and s.validation.n_edges == 0


@given(bipartite_graphs(timestamps=True))
def test_graph_json_roundtrip(R):
    R2, _ = graph_from_dict(json.loads(json.dumps(graph_to_dict(R))))
    assert R2 == R
    assert np.array_equal(R2.timestamps, R.timestamps)


def test_save_load_and_write(tmp_path, small_graph):
    from topocf.graph import IdMaps
    ids = IdMaps(tuple(f"u{k}" for k in range(4)), tuple(f"i{k}" for k in range(5)))
    save_graph(tmp_path / "g.json", small_graph, ids)
    R, ids2 = load_graph(tmp_path / "g.json")
    assert R == small_graph and ids2 == ids
    write_interactions(tmp_path / "g.tsv", R, ids2)
    R3, ids3 = build_matrix(load_interactions(tmp_path / "g.tsv"))
    assert R3.n_edges == R.n_edges
    with pytest.raises(DataError):
        graph_from_dict({"schema": "other"})


def test_select_composes_labels(small_graph):
    sub = small_graph.select(user_keep=np.array([0, 1, 1, 1], bool))
    sub2 = sub.select(user_keep=np.array([1, 0, 1], bool))
    assert sub2.user_labels.tolist() == [1, 3]
    assert np.array_equal(sub2.dense(), small_graph.dense()[[1, 3]])
