"""Sparse bipartite user-item graphs: loading, k-core, normalization, projection, splits."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DataError, MissingTimestamps, ZeroDegreeNode, ZeroRecords

log = logging.getLogger(__name__)

USER, ITEM = "user", "item"
GRAPH_SCHEMA = "topocf.graph"
GRAPH_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Interaction:
    user: str
    item: str
    rating: Optional[float] = None
    timestamp: Optional[int] = None


@dataclass(frozen=True)
class InteractionSet:
    records: tuple
    malformed: int = 0

    def __len__(self):
        return len(self.records)


def collapse_duplicates(records: Iterable[Interaction]) -> list:
    """Keep one record per (user, item), preferring the earliest timestamp.

    Output order is the order of first appearance of each pair.
    """
    kept = {}
    for rec in records:
        key = (rec.user, rec.item)
        prev = kept.get(key)
        if prev is None:
            kept[key] = rec
        elif rec.timestamp is not None and (prev.timestamp is None or rec.timestamp < prev.timestamp):
            kept[key] = rec
    return list(kept.values())


def _sniff_delimiter(path: Path) -> str:
    with open(path, newline="") as fh:
        for line in fh:
            if line.strip() and not line.startswith("#"):
                return "\t" if "\t" in line else ","
    return "\t"


def load_interactions(path, fmt: Optional[str] = None) -> InteractionSet:
    """Parse ``user <sep> item [<sep> rating] [<sep> timestamp]`` lines.

    ``fmt`` is ``"tsv"``, ``"csv"`` or ``None`` to sniff tab vs comma from the
    first data line. Lines starting with ``#`` are comments.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"cannot read interactions file: {path}")
    if fmt is None:
        delim = _sniff_delimiter(path)
    elif fmt in ("tsv", "csv"):
        delim = "\t" if fmt == "tsv" else ","
    else:
        raise DataError(f"unknown format {fmt!r} (expected tsv or csv)")

    records, malformed = [], 0
    try:
        with open(path, newline="") as fh:
            for row in csv.reader(fh, delimiter=delim):
                if not row or (row[0].startswith("#")):
                    continue
                row = [c.strip() for c in row]
                if len(row) < 2 or not row[0] or not row[1]:
                    malformed += 1
                    continue
                try:
                    rating = float(row[2]) if len(row) > 2 and row[2] else None
                    ts = int(float(row[3])) if len(row) > 3 and row[3] else None
                except ValueError:
                    malformed += 1
                    continue
                records.append(Interaction(row[0], row[1], rating, ts))
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read interactions file {path}: {exc}") from exc

    if malformed:
        log.warning("%s: skipped %d malformed lines", path, malformed)
    records = collapse_duplicates(records)
    if not records:
        raise ZeroRecords(f"{path}: no valid interaction records")
    return InteractionSet(tuple(records), malformed)


@dataclass(frozen=True)
class IdMaps:
    users: tuple
    items: tuple

    @cached_property
    def user_index(self) -> dict:
        return {k: i for i, k in enumerate(self.users)}

    @cached_property
    def item_index(self) -> dict:
        return {k: i for i, k in enumerate(self.items)}

    def restrict(self, R: "InteractionMatrix") -> "IdMaps":
        """Key maps for a subgraph whose labels index into these maps."""
        return IdMaps(tuple(self.users[j] for j in R.user_labels),
                      tuple(self.items[j] for j in R.item_labels))


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """Binary U x I interaction matrix.

    ``csr`` holds ones with sorted column indices; ``timestamps`` (optional) is
    aligned with ``csr.indices``. ``user_labels``/``item_labels`` record, for
    every row/column, its index in the graph this one was derived from.
    """

    csr: sp.csr_matrix
    timestamps: Optional[np.ndarray] = None
    user_labels: Optional[np.ndarray] = None
    item_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.user_labels is None:
            object.__setattr__(self, "user_labels", np.arange(self.csr.shape[0], dtype=np.int64))
        if self.item_labels is None:
            object.__setattr__(self, "item_labels", np.arange(self.csr.shape[1], dtype=np.int64))

    @classmethod
    def from_edges(cls, users, items, n_users: int, n_items: int, timestamps=None,
                   user_labels=None, item_labels=None) -> "InteractionMatrix":
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        if users.shape != items.shape:
            raise ValueError("users and items must have equal length")
        if users.size and (users.min() < 0 or users.max() >= n_users
                           or items.min() < 0 or items.max() >= n_items):
            raise ValueError("edge index out of range")
        key = users * n_items + items
        if timestamps is not None:
            timestamps = np.asarray(timestamps, dtype=np.int64)
            order = np.lexsort((timestamps, key))
        else:
            order = np.argsort(key, kind="stable")
        key = key[order]
        first = np.ones(key.size, dtype=bool)
        first[1:] = key[1:] != key[:-1]
        key = key[first]
        ts = timestamps[order][first] if timestamps is not None else None
        rows, cols = key // n_items, key % n_items
        indptr = np.zeros(n_users + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_users), out=indptr[1:])
        csr = sp.csr_matrix((np.ones(key.size), cols.astype(np.int64), indptr), shape=(n_users, n_items))
        return cls(csr, ts, None if user_labels is None else np.asarray(user_labels, dtype=np.int64),
                   None if item_labels is None else np.asarray(item_labels, dtype=np.int64))

    @classmethod
    def from_dense(cls, dense) -> "InteractionMatrix":
        dense = np.asarray(dense)
        u, i = np.nonzero(dense)
        return cls.from_edges(u, i, dense.shape[0], dense.shape[1])

    @property
    def n_users(self) -> int:
        return self.csr.shape[0]

    @property
    def n_items(self) -> int:
        return self.csr.shape[1]

    @property
    def n_edges(self) -> int:
        return int(self.csr.indptr[-1])

    @property
    def shape(self):
        return self.csr.shape

    @cached_property
    def user_degrees(self) -> np.ndarray:
        return np.diff(self.csr.indptr)

    @cached_property
    def item_degrees(self) -> np.ndarray:
        return np.bincount(self.csr.indices, minlength=self.n_items)

    def degrees(self, side: str) -> np.ndarray:
        return self.user_degrees if side == USER else self.item_degrees

    @cached_property
    def csc(self) -> sp.csc_matrix:
        out = self.csr.tocsc()
        out.sort_indices()
        return out

    def row(self, u: int) -> np.ndarray:
        return self.csr.indices[self.csr.indptr[u]:self.csr.indptr[u + 1]]

    def col(self, i: int) -> np.ndarray:
        return self.csc.indices[self.csc.indptr[i]:self.csc.indptr[i + 1]]

    @property
    def row_adjacency(self) -> list:
        return [self.row(u) for u in range(self.n_users)]

    @property
    def col_adjacency(self) -> list:
        return [self.col(i) for i in range(self.n_items)]

    @cached_property
    def edge_users(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_users, dtype=np.int64), self.user_degrees)

    @property
    def edge_items(self) -> np.ndarray:
        return self.csr.indices.astype(np.int64)

    def edges(self):
        return self.edge_users, self.edge_items

    def dense(self) -> np.ndarray:
        return self.csr.toarray()

    def is_empty(self) -> bool:
        return self.n_users == 0 or self.n_items == 0 or self.n_edges == 0

    def select(self, edge_mask=None, user_keep=None, item_keep=None) -> "InteractionMatrix":
        """Subgraph on kept users/items (re-densified) with the masked edges.

        Labels are composed so they keep pointing into the root graph.
        """
        eu, ei = self.edges()
        mask = np.ones(self.n_edges, dtype=bool) if edge_mask is None else np.asarray(edge_mask, dtype=bool)
        user_keep = np.ones(self.n_users, dtype=bool) if user_keep is None else np.asarray(user_keep, dtype=bool)
        item_keep = np.ones(self.n_items, dtype=bool) if item_keep is None else np.asarray(item_keep, dtype=bool)
        mask = mask & user_keep[eu] & item_keep[ei]
        u_new = np.cumsum(user_keep) - 1
        i_new = np.cumsum(item_keep) - 1
        ts = None if self.timestamps is None else self.timestamps[mask]
        return InteractionMatrix.from_edges(
            u_new[eu[mask]], i_new[ei[mask]], int(user_keep.sum()), int(item_keep.sum()), ts,
            self.user_labels[user_keep], self.item_labels[item_keep])

    def prune_isolates(self, edge_mask=None) -> "InteractionMatrix":
        """Keep the masked edges and drop nodes left without any edge."""
        eu, ei = self.edges()
        mask = np.ones(self.n_edges, dtype=bool) if edge_mask is None else np.asarray(edge_mask, dtype=bool)
        user_keep = np.bincount(eu[mask], minlength=self.n_users) > 0
        item_keep = np.bincount(ei[mask], minlength=self.n_items) > 0
        return self.select(mask, user_keep, item_keep)

    def edge_keys(self) -> set:
        """Edges as (user label, item label) pairs in the root graph's index space."""
        eu, ei = self.edges()
        return set(zip(self.user_labels[eu].tolist(), self.item_labels[ei].tolist()))

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (np.array(self.shape, dtype=np.int64), self.user_labels, self.item_labels,
                    self.csr.indptr.astype(np.int64), self.csr.indices.astype(np.int64)):
            h.update(np.ascontiguousarray(arr).tobytes())
            h.update(b"|")
        if self.timestamps is not None:
            h.update(self.timestamps.astype(np.int64).tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, InteractionMatrix):
            return NotImplemented
        return self.content_hash() == other.content_hash()

    __hash__ = None

    def __repr__(self):
        return f"InteractionMatrix(U={self.n_users}, I={self.n_items}, E={self.n_edges})"


def build_matrix(interactions: InteractionSet):
    """Index users and items by first appearance and build the binary matrix."""
    if not len(interactions):
        raise ZeroRecords("empty interaction set")
    users, items = {}, {}
    eu, ei, ts = [], [], []
    has_ts = all(r.timestamp is not None for r in interactions.records)
    for rec in interactions.records:
        eu.append(users.setdefault(rec.user, len(users)))
        ei.append(items.setdefault(rec.item, len(items)))
        if has_ts:
            ts.append(rec.timestamp)
    R = InteractionMatrix.from_edges(eu, ei, len(users), len(items), ts if has_ts else None)
    return R, IdMaps(tuple(users), tuple(items))


def kcore_filter(R: InteractionMatrix, k: int) -> InteractionMatrix:
    """Iterative user-item k-core: repeatedly drop every node with degree < k.

    All under-degree nodes of a round are removed together; nodes with degree
    exactly k survive. The result may be empty.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    eu, ei = R.edges()
    alive = np.ones(R.n_edges, dtype=bool)
    while True:
        du = np.bincount(eu[alive], minlength=R.n_users)
        di = np.bincount(ei[alive], minlength=R.n_items)
        bad = alive & ((du[eu] < k) | (di[ei] < k))
        if not bad.any():
            break
        alive &= ~bad
    out = R.prune_isolates(alive)
    if out.is_empty():
        log.warning("k-core with k=%d left an empty graph", k)
    return out


@dataclass(frozen=True, eq=False)
class NormalizedInteractionMatrix:
    """Edge weights ``1 / (sqrt(deg_u) * sqrt(deg_i))`` on the pattern of R."""

    weights: sp.csr_matrix

    @property
    def shape(self):
        return self.weights.shape

    @property
    def n_users(self):
        return self.weights.shape[0]

    @property
    def n_items(self):
        return self.weights.shape[1]

    @property
    def nnz(self):
        return self.weights.nnz

    def dense(self) -> np.ndarray:
        return self.weights.toarray()


def symmetric_normalize(R: InteractionMatrix, allow_isolates: bool = False) -> NormalizedInteractionMatrix:
    """D^{-1/2} A D^{-1/2} restricted to the user-item block.

    Isolated nodes carry no edges and so never enter the formula; they are
    still rejected unless ``allow_isolates`` (augmented views keep the full
    index space on purpose).
    """
    du, di = R.user_degrees, R.item_degrees
    if not allow_isolates and (np.any(du == 0) or np.any(di == 0)):
        raise ZeroDegreeNode(
            f"{int((du == 0).sum())} users and {int((di == 0).sum())} items have zero degree; prune isolates first")
    eu, ei = R.edges()
    w = 1.0 / (np.sqrt(du[eu].astype(float)) * np.sqrt(di[ei].astype(float)))
    W = sp.csr_matrix((w, R.csr.indices.copy(), R.csr.indptr.copy()), shape=R.shape)
    return NormalizedInteractionMatrix(W)


@dataclass(frozen=True, eq=False)
class ProjectedGraph:
    """Same-side co-occurrence graph.

    ``counts`` holds c_vw = |N_v & N_w| for v != w; ``self_counts`` the diagonal
    (each node's own degree in the bipartite graph).
    """

    side: str
    counts: sp.csr_matrix
    self_counts: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.counts.shape[0]

    @property
    def n_edges(self) -> int:
        """Undirected edge count."""
        return self.counts.nnz // 2

    @cached_property
    def degree(self) -> np.ndarray:
        """Binarized degree (number of distinct co-occurring nodes)."""
        return np.diff(self.counts.indptr)

    @cached_property
    def weighted_degree(self) -> np.ndarray:
        """Row sums of the full co-occurrence matrix, diagonal included."""
        return np.asarray(self.counts.sum(axis=1)).ravel() + self.self_counts

    def neighbors(self, v: int) -> np.ndarray:
        return self.counts.indices[self.counts.indptr[v]:self.counts.indptr[v + 1]]

    def edge_list(self):
        """Upper-triangle edges (v < w) with counts."""
        coo = sp.triu(self.counts, k=1).tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.astype(np.int64)


def project(R: InteractionMatrix, side: str) -> ProjectedGraph:
    """R R^T (users) or R^T R (items) with the diagonal split off."""
    if side not in (USER, ITEM):
        raise ValueError(f"side must be 'user' or 'item', got {side!r}")
    B = R.csr.astype(np.int64)
    G = (B @ B.T) if side == USER else (B.T @ B)
    G = sp.csr_matrix(G)
    diag = G.diagonal().astype(np.int64)
    G.setdiag(0)
    G.eliminate_zeros()
    G.sort_indices()
    return ProjectedGraph(side, G, diag)


def neighborhood(R: InteractionMatrix, node, order: int = 1) -> np.ndarray:
    """Opposite-side neighbors (order 1) or same-side 2-hop neighbors (order 2)."""
    side, idx = node
    n = R.n_users if side == USER else R.n_items
    if not 0 <= idx < n:
        raise IndexError(f"{side} index {idx} out of range [0, {n})")
    first = R.row(idx) if side == USER else R.col(idx)
    if order == 1:
        return np.array(first, dtype=np.int64)
    if order != 2:
        raise ValueError("order must be 1 or 2")
    parts = [R.col(i) for i in first] if side == USER else [R.row(u) for u in first]
    if not parts:
        return np.empty(0, dtype=np.int64)
    second = np.unique(np.concatenate(parts))
    return second[second != idx].astype(np.int64)


@dataclass(frozen=True, eq=False)
class SplitDataset:
    train: InteractionMatrix
    validation: InteractionMatrix
    test: InteractionMatrix
    strategy: str
    seed: int

    def prune_cold(self) -> "SplitDataset":
        """Drop users/items with no training edge from all three parts."""
        user_keep = self.train.user_degrees > 0
        item_keep = self.train.item_degrees > 0
        parts = [m.select(None, user_keep, item_keep) for m in (self.train, self.validation, self.test)]
        return SplitDataset(*parts, self.strategy, self.seed)


def _split_counts(n: int, ratios) -> tuple:
    if n < 3:
        return n, 0, 0
    _, r_val, r_test = ratios
    n_val = max(1, int(np.floor(n * r_val + 1e-9))) if r_val > 0 else 0
    n_test = max(1, int(np.floor(n * r_test + 1e-9))) if r_test > 0 else 0
    while n - n_val - n_test < 1:
        if n_val >= n_test and n_val > 0:
            n_val -= 1
        else:
            n_test -= 1
    return n - n_val - n_test, n_val, n_test


def split(R: InteractionMatrix, strategy: str = "random", ratios=(0.8, 0.1, 0.1), seed: int = 0) -> SplitDataset:
    """Per-user hold-out split.

    Each user with >= 3 interactions gets floor(n * ratio) validation and test
    edges (at least one each), train takes the remainder; users with fewer
    than 3 interactions stay entirely in train. ``temporal`` sends the latest
    edges to test and the next latest to validation.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    if strategy not in ("random", "temporal"):
        raise ValueError(f"unknown split strategy {strategy!r}")
    if strategy == "temporal" and R.timestamps is None:
        raise MissingTimestamps("temporal split requires timestamps on every edge")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    part = np.zeros(R.n_edges, dtype=np.int8)  # 0 train, 1 val, 2 test
    indptr = R.csr.indptr
    for u in range(R.n_users):
        lo, hi = indptr[u], indptr[u + 1]
        n = hi - lo
        _, n_val, n_test = _split_counts(n, ratios)
        if n_val == 0 and n_test == 0:
            continue
        if strategy == "random":
            order = rng.permutation(n)
        else:
            # ties broken by item index so the order is total
            order = np.lexsort((R.csr.indices[lo:hi], R.timestamps[lo:hi]))
        local = np.zeros(n, dtype=np.int8)
        local[order[n - n_test:]] = 2
        local[order[n - n_test - n_val:n - n_test]] = 1
        part[lo:hi] = local

    def take(code):
        m = part == code
        eu, ei = R.edges()
        ts = None if R.timestamps is None else R.timestamps[m]
        return InteractionMatrix.from_edges(eu[m], ei[m], R.n_users, R.n_items, ts, R.user_labels, R.item_labels)

    return SplitDataset(take(0), take(1), take(2), strategy, seed)


# ---------------------------------------------------------------- serialization

def _atomic_write_text(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def graph_to_dict(R: InteractionMatrix, idmaps: Optional[IdMaps] = None) -> dict:
    return {
        "schema": GRAPH_SCHEMA,
        "version": GRAPH_SCHEMA_VERSION,
        "n_users": R.n_users,
        "n_items": R.n_items,
        "n_edges": R.n_edges,
        "indptr": R.csr.indptr.astype(int).tolist(),
        "indices": R.csr.indices.astype(int).tolist(),
        "timestamps": None if R.timestamps is None else R.timestamps.astype(int).tolist(),
        "user_labels": R.user_labels.astype(int).tolist(),
        "item_labels": R.item_labels.astype(int).tolist(),
        "users": None if idmaps is None else list(idmaps.users),
        "items": None if idmaps is None else list(idmaps.items),
    }


def graph_from_dict(doc: dict):
    if doc.get("schema") != GRAPH_SCHEMA:
        raise DataError(f"not a {GRAPH_SCHEMA} document")
    if doc.get("version") != GRAPH_SCHEMA_VERSION:
        raise DataError(f"unsupported graph schema version {doc.get('version')}")
    n_users, n_items = doc["n_users"], doc["n_items"]
    indptr = np.asarray(doc["indptr"], dtype=np.int64)
    indices = np.asarray(doc["indices"], dtype=np.int64)
    csr = sp.csr_matrix((np.ones(indices.size), indices, indptr), shape=(n_users, n_items))
    ts = doc.get("timestamps")
    R = InteractionMatrix(csr, None if ts is None else np.asarray(ts, dtype=np.int64),
                          np.asarray(doc["user_labels"], dtype=np.int64),
                          np.asarray(doc["item_labels"], dtype=np.int64))
    idmaps = None
    if doc.get("users") is not None:
        idmaps = IdMaps(tuple(doc["users"]), tuple(doc["items"]))
    return R, idmaps


def save_graph(path, R: InteractionMatrix, idmaps: Optional[IdMaps] = None):
    _atomic_write_text(Path(path), json.dumps(graph_to_dict(R, idmaps), separators=(",", ":")))


def load_graph(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read graph file {path}: {exc}") from exc
    return graph_from_dict(doc)


def write_interactions(path, R: InteractionMatrix, idmaps: Optional[IdMaps] = None, sep: str = "\t"):
    """Write edges back as a delimited interaction file."""
    eu, ei = R.edges()
    lines = []
    for n, (u, i) in enumerate(zip(eu, ei)):
        uk = idmaps.users[u] if idmaps else f"u{R.user_labels[u]}"
        ik = idmaps.items[i] if idmaps else f"i{R.item_labels[i]}"
        row = [uk, ik]
        if R.timestamps is not None:
            row += ["", str(int(R.timestamps[n]))]
        lines.append(sep.join(row))
    _atomic_write_text(Path(path), "\n".join(lines) + "\n")
