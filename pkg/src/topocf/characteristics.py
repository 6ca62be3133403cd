"""Classical and topological dataset characteristics.

Clustering and assortativity are computed from row blocks of the projected
co-occurrence matrix so the full U x U product never has to be held at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import DataError, EmptyProjection, NonFinite, TooFewSamples
from .graph import ITEM, USER, InteractionMatrix, ProjectedGraph, neighborhood
from .numerics import log10_transform

FEATURE_NAMES = (
    "space_size", "shape", "density", "gini_user", "gini_item",
    "avg_degree_user", "avg_degree_item", "avg_clust_user", "avg_clust_item",
    "assort_user", "assort_item",
)
FEATURE_LABELS = (
    "SpaceSize", "Shape", "Density", "Gini-U", "Gini-I",
    "AvgDegree-U", "AvgDegree-I", "AvgClustC-U", "AvgClustC-I",
    "Assort-U", "Assort-I",
)
DEFAULT_LOG_FEATURES = ("space_size", "avg_degree_user", "avg_degree_item")


@dataclass(frozen=True)
class ClassicalStats:
    space_size: int
    shape: float
    density: float
    sparsity: float
    gini_user: float
    gini_item: float


@dataclass(frozen=True)
class PowerLawFit:
    theta: Optional[float]
    d_min: int
    n_tail: int
    fitted: bool
    reason: str = ""


@dataclass(frozen=True)
class TopologyStats:
    avg_degree_user: float
    avg_degree_item: float
    avg_clust_user: float
    avg_clust_item: float
    assort_user: Optional[float]
    assort_item: Optional[float]
    degree_histogram: dict
    user_histogram: dict
    item_histogram: dict
    power_law: PowerLawFit
    no_two_hop_users: int = 0
    no_two_hop_items: int = 0


@dataclass(frozen=True)
class CharacteristicsRecord:
    """The 11 predictors in fixed order, raw and transformed."""

    raw: tuple
    values: tuple
    log_applied: tuple
    flags: tuple = ()

    names = FEATURE_NAMES
    labels = FEATURE_LABELS

    def as_dict(self, transformed: bool = True) -> dict:
        return dict(zip(FEATURE_NAMES, self.values if transformed else self.raw))

    def __getitem__(self, name):
        return self.values[FEATURE_NAMES.index(name)]


# ---------------------------------------------------------------- classical

def gini(degrees) -> float:
    """sum_{i<j} |x_i - x_j| / (n * sum x), via the sorted-rank identity."""
    x = np.sort(np.asarray(degrees, dtype=float))
    n = x.size
    if n < 2:
        raise ValueError("gini needs at least two entries")
    total = x.sum()
    if total <= 0:
        raise DataError("gini needs a positive total")
    ranks = 2 * np.arange(n) - n + 1
    return float(np.dot(ranks, x) / (n * total))


def classical_stats(R: InteractionMatrix) -> ClassicalStats:
    U, I, E = R.n_users, R.n_items, R.n_edges
    if U < 1 or I < 1:
        raise DataError("classical stats need at least one user and one item")
    psi = U * I
    density = E / psi
    return ClassicalStats(
        space_size=psi,
        shape=U / I,
        density=density,
        sparsity=1.0 - density,
        gini_user=gini(R.user_degrees) if U >= 2 else 0.0,
        gini_item=gini(R.item_degrees) if I >= 2 else 0.0,
    )


# ---------------------------------------------------------------- topology

def avg_degree(R: InteractionMatrix, side: str) -> float:
    n = R.n_users if side == USER else R.n_items
    if n == 0:
        raise DataError(f"no {side}s")
    return R.n_edges / n


def _side_matrix(R: InteractionMatrix, side: str) -> sp.csr_matrix:
    B = R.csr if side == USER else R.csc.T.tocsr()
    return B.astype(np.int64)


def _projection_blocks(B: sp.csr_matrix, max_entries: int = 20_000_000):
    """Yield (start, coo block of B[start:stop] @ B.T with the diagonal removed)."""
    n = B.shape[0]
    step = max(1, min(n, max_entries // max(n, 1)))
    Bt = B.T.tocsc()
    for start in range(0, n, step):
        C = (B[start:start + step] @ Bt).tocoo()
        keep = C.col != C.row + start
        yield start, C.row[keep], C.col[keep], C.data[keep]


@dataclass(frozen=True)
class _SideTopology:
    clustering: np.ndarray
    degree: np.ndarray
    assortativity: Optional[float]


def _side_topology(R: InteractionMatrix, side: str) -> _SideTopology:
    B = _side_matrix(R, side)
    n = B.shape[0]
    d = np.diff(B.indptr).astype(float)
    gamma_sum = np.zeros(n)
    k = np.zeros(n, dtype=np.int64)
    for start, rows, cols, c in _projection_blocks(B):
        v = rows + start
        iou = c / (d[v] + d[cols] - c)
        gamma_sum += np.bincount(v, weights=iou, minlength=n)
        k += np.bincount(v, minlength=n)
    clustering = np.divide(gamma_sum, k, out=np.zeros(n), where=k > 0)
    return _SideTopology(clustering, k, _assortativity_blocks(B, k))


def _pearson_on_adjacency(k: np.ndarray, quad) -> Optional[float]:
    """Pearson correlation of excess degree across edge endpoints.

    Over the doubled (directed) edge list every node v appears k_v times, so
    mean and variance are degree-weighted; the cross term is x^T A x.
    """
    total = k.sum()
    if total == 0:
        raise EmptyProjection("projected graph has no edges")
    x = k - 1.0
    mu = np.dot(k, x) / total
    xc = x - mu
    var = np.dot(k, xc * xc) / total
    if var <= 1e-14 * max(1.0, mu * mu):
        return None
    r = quad(xc) / total / var
    return float(min(1.0, max(-1.0, r)))


def _assortativity_blocks(B: sp.csr_matrix, k: np.ndarray) -> Optional[float]:
    if k.sum() == 0:
        return None

    def quad(xc):
        acc = 0.0
        for start, rows, cols, _ in _projection_blocks(B):
            acc += np.dot(xc[rows + start], xc[cols])
        return acc

    return _pearson_on_adjacency(k, quad)


def degree_assortativity(P: ProjectedGraph) -> Optional[float]:
    """Newman degree correlation on the binarized projection; ``None`` when degenerate."""
    A = P.counts.copy()
    A.data = np.ones_like(A.data, dtype=float)
    k = np.diff(A.indptr)
    return _pearson_on_adjacency(k, lambda xc: float(xc @ (A @ xc)))


def pair_clustering(R: InteractionMatrix, v, w) -> float:
    """Intersection over union of two same-side neighborhoods."""
    (sv, iv), (sw, iw) = v, w
    if sv != sw:
        raise ValueError("pair clustering needs two nodes of the same side")
    if iv == iw:
        raise ValueError("pair clustering needs two distinct nodes")
    a = set(neighborhood(R, v, 1).tolist())
    b = set(neighborhood(R, w, 1).tolist())
    union = a | b
    return len(a & b) / len(union) if union else 0.0


def node_clustering(R: InteractionMatrix, v) -> float:
    """Mean pairwise IoU over the 2-hop neighborhood; 0 if that neighborhood is empty."""
    side, _ = v
    others = neighborhood(R, v, 2)
    if others.size == 0:
        return 0.0
    return float(np.mean([pair_clustering(R, v, (side, int(w))) for w in others]))


def avg_clustering(R: InteractionMatrix, side: str) -> float:
    topo = _side_topology(R, side)
    return float(topo.clustering.mean()) if topo.clustering.size else 0.0


def degree_histogram(degrees) -> dict:
    values, counts = np.unique(np.asarray(degrees, dtype=np.int64), return_counts=True)
    return {int(d): int(c) for d, c in zip(values, counts)}


def degree_distribution(R: InteractionMatrix) -> dict:
    """P(d) = n_d / (U + I) pooled over both sides."""
    hist = degree_histogram(np.concatenate([R.user_degrees, R.item_degrees]))
    n = R.n_users + R.n_items
    return {d: c / n for d, c in hist.items()}


def fit_power_law(degrees, d_min: int = 1, min_tail: int = 50) -> PowerLawFit:
    """Discrete power-law MLE: theta = 1 + n / sum ln(d / (d_min - 0.5)) over d >= d_min."""
    if d_min < 1:
        raise ValueError("d_min must be >= 1")
    d = np.asarray(degrees, dtype=float)
    tail = d[d >= d_min]
    if tail.size < min_tail:
        raise TooFewSamples(f"{tail.size} degrees >= {d_min}; need {min_tail}")
    if np.all(tail == tail[0]):
        return PowerLawFit(math.inf, d_min, int(tail.size), False, "all tail degrees equal")
    theta = 1.0 + tail.size / np.sum(np.log(tail / (d_min - 0.5)))
    return PowerLawFit(float(theta), d_min, int(tail.size), True)


def topology_stats(R: InteractionMatrix, d_min: int = 1) -> TopologyStats:
    if R.n_users == 0 or R.n_items == 0:
        raise DataError("topology stats need a non-empty graph")
    tu, ti = _side_topology(R, USER), _side_topology(R, ITEM)
    pooled = np.concatenate([R.user_degrees, R.item_degrees])
    try:
        pl = fit_power_law(pooled, d_min)
    except TooFewSamples as exc:
        pl = PowerLawFit(None, d_min, int((pooled >= d_min).sum()), False, str(exc))
    return TopologyStats(
        avg_degree_user=avg_degree(R, USER),
        avg_degree_item=avg_degree(R, ITEM),
        avg_clust_user=float(tu.clustering.mean()),
        avg_clust_item=float(ti.clustering.mean()),
        assort_user=tu.assortativity,
        assort_item=ti.assortativity,
        degree_histogram=degree_histogram(pooled),
        user_histogram=degree_histogram(R.user_degrees),
        item_histogram=degree_histogram(R.item_degrees),
        power_law=pl,
        no_two_hop_users=int((tu.degree == 0).sum()),
        no_two_hop_items=int((ti.degree == 0).sum()),
    )


def feature_vector(c: ClassicalStats, t: TopologyStats, log_features=DEFAULT_LOG_FEATURES) -> CharacteristicsRecord:
    """Assemble the ordered predictor row; degenerate assortativity becomes 0 with a flag."""
    unknown = set(log_features) - set(FEATURE_NAMES)
    if unknown:
        raise ValueError(f"unknown features for log transform: {sorted(unknown)}")
    flags = []
    au, ai = t.assort_user, t.assort_item
    if au is None:
        flags.append("assort_user_degenerate")
        au = 0.0
    if ai is None:
        flags.append("assort_item_degenerate")
        ai = 0.0
    if t.no_two_hop_users:
        flags.append(f"users_without_two_hop={t.no_two_hop_users}")
    if t.no_two_hop_items:
        flags.append(f"items_without_two_hop={t.no_two_hop_items}")
    raw = (float(c.space_size), c.shape, c.density, c.gini_user, c.gini_item,
           t.avg_degree_user, t.avg_degree_item, t.avg_clust_user, t.avg_clust_item, au, ai)
    if not all(math.isfinite(x) for x in raw):
        raise NonFinite("non-finite characteristic")
    applied = tuple(name in log_features for name in FEATURE_NAMES)
    values = tuple(float(log10_transform([x])[0]) if a else float(x) for x, a in zip(raw, applied))
    return CharacteristicsRecord(raw, values, applied, tuple(flags))


@dataclass(frozen=True)
class Profile:
    n_users: int
    n_edges: int
    n_items: int
    classical: ClassicalStats
    topology: TopologyStats
    record: CharacteristicsRecord

    def to_dict(self) -> dict:
        t = self.topology
        return {
            "n_users": self.n_users,
            "n_items": self.n_items,
            "n_edges": self.n_edges,
            "characteristics": dict(zip(FEATURE_NAMES, self.record.raw)),
            "transformed": dict(zip(FEATURE_NAMES, self.record.values)),
            "log_transformed": [n for n, a in zip(FEATURE_NAMES, self.record.log_applied) if a],
            "sparsity": self.classical.sparsity,
            "assortativity_defined": {"user": t.assort_user is not None, "item": t.assort_item is not None},
            "power_law": {"theta": t.power_law.theta if t.power_law.fitted else None,
                          "d_min": t.power_law.d_min, "n_tail": t.power_law.n_tail,
                          "fitted": t.power_law.fitted, "reason": t.power_law.reason},
            "degree_histogram": {str(k): v for k, v in t.degree_histogram.items()},
            "user_degree_histogram": {str(k): v for k, v in t.user_histogram.items()},
            "item_degree_histogram": {str(k): v for k, v in t.item_histogram.items()},
            "flags": list(self.record.flags),
        }


def profile(R: InteractionMatrix, d_min: int = 1, log_features=DEFAULT_LOG_FEATURES) -> Profile:
    c = classical_stats(R)
    t = topology_stats(R, d_min)
    return Profile(R.n_users, R.n_edges, R.n_items, c, t, feature_vector(c, t, log_features))
