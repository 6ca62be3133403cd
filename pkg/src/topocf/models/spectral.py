"""SVD-based recommenders: the closed-form GFCF filter and SVD-GCN."""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
import torch
import torch.nn as nn

from .. import losses
from ..errors import EmptyProjection
from ..graph import ITEM, USER, InteractionMatrix, NormalizedInteractionMatrix, ProjectedGraph, project, symmetric_normalize
from ..numerics import RngStream, SvdFactors, as_generator, truncated_svd
from .base import DTYPE, Batch, GraphRecommender, dot_scores

log = logging.getLogger(__name__)


def _inv_sqrt(d):
    d = np.asarray(d, dtype=float)
    return np.divide(1.0, np.sqrt(d), out=np.zeros_like(d), where=d > 0)


def gfcf_score(R: InteractionMatrix, K: int, t: float, users=None, rng=None, factors: SvdFactors = None) -> np.ndarray:
    """R_u (W^T W + t D_I^{-1/2} V_K V_K^T D_I^{1/2}) for the given users.

    W is the symmetric-normalized U x I matrix and V_K its top-K right
    singular vectors. The I x I filter is never formed.
    """
    W = symmetric_normalize(R, allow_isolates=True).weights
    if factors is None:
        if not 1 <= K <= min(R.shape):
            raise ValueError(f"rank {K} out of range [1, {min(R.shape)}]")
        factors = truncated_svd(W, K, rng=rng if rng is not None else RngStream(0))
    rows = R.csr if users is None else R.csr[np.asarray(users, dtype=np.int64)]
    rows = rows.toarray()
    linear = np.asarray(W.T @ (W @ rows.T)).T
    d = R.item_degrees.astype(float)
    ideal = ((rows * _inv_sqrt(d)) @ factors.V) @ factors.V.T * np.sqrt(d)
    return linear + t * ideal


class GFCF(GraphRecommender):
    """Closed-form graph filter; nothing to train."""

    kind = "GFCF"
    trainable = False
    uses_embeddings = False
    note = ("ideal low-pass term built from the top-K right (item-side) singular vectors, "
            "so the filter is item x item")

    def __init__(self, config, train: InteractionMatrix, rng: RngStream):
        super().__init__(config, train, rng)
        self.K = min(self.config.svd_rank, self.n_users, self.n_items)
        self.W = symmetric_normalize(train, allow_isolates=True).weights
        self.factors = truncated_svd(self.W, self.K, rng=rng.derive("svd"))

    @torch.no_grad()
    def score_all(self, users=None) -> torch.Tensor:
        users = np.arange(self.n_users) if users is None else np.asarray(users, dtype=np.int64)
        s = gfcf_score(self.train_graph, self.K, self.config.gfcf_t, users, factors=self.factors)
        return torch.from_numpy(s)


def shifted_normalize(R: InteractionMatrix, t2: float) -> NormalizedInteractionMatrix:
    """Edge weights 1 / sqrt((d_u + t2)(d_i + t2))."""
    eu, ei = R.edges()
    w = 1.0 / np.sqrt((R.user_degrees[eu] + t2) * (R.item_degrees[ei] + t2))
    return NormalizedInteractionMatrix(sp.csr_matrix((w, R.csr.indices.copy(), R.csr.indptr.copy()), shape=R.shape))


def svdgcn_embed(W, K: int, t1: float, rng=None):
    """Base embeddings (U_K * exp(t1 S_K), V_K * exp(t1 S_K)) and the factors behind them."""
    f = truncated_svd(W, K, rng=rng if rng is not None else RngStream(0))
    scale = np.exp(t1 * f.S)
    return f.U * scale, f.V * scale, f


def vmax_bound(R: InteractionMatrix, t2: float) -> float:
    """max(D) / (max(D) + t2): the largest-singular-value bound under the shifted normalization."""
    dmax = float(max(R.user_degrees.max(initial=0), R.item_degrees.max(initial=0)))
    return dmax / (dmax + t2)


def same_side_triples(P: ProjectedGraph, anchors, rng, max_tries: int = 20):
    """For each anchor draw one projected neighbor and one non-neighbor (rejection sampled).

    Anchors without neighbors, or adjacent to every other node, are skipped.
    """
    gen = as_generator(rng)
    A = P.counts
    n = P.n_nodes
    a_out, p_out, n_out = [], [], []
    for v in np.asarray(anchors, dtype=np.int64):
        nbrs = A.indices[A.indptr[v]:A.indptr[v + 1]]
        if nbrs.size == 0 or nbrs.size >= n - 1:
            continue
        pos = nbrs[gen.integers(nbrs.size)]
        for _ in range(max_tries):
            w = int(gen.integers(n))
            if w != v and not _contains(nbrs, w):
                a_out.append(v)
                p_out.append(pos)
                n_out.append(w)
                break
    as_t = lambda x: torch.as_tensor(np.asarray(x, dtype=np.int64))
    return as_t(a_out), as_t(p_out), as_t(n_out)


def _contains(sorted_arr, x):
    k = np.searchsorted(sorted_arr, x)
    return k < sorted_arr.size and sorted_arr[k] == x


class SVDGCN(GraphRecommender):
    """Embeddings (U_K exp(t1 S_K)) W with a trainable K x F matrix W."""

    kind = "SVDGCN"
    uses_embeddings = False

    def __init__(self, config, train: InteractionMatrix, rng: RngStream):
        super().__init__(config, train, rng)
        cfg = self.config
        self.K = min(cfg.svd_rank, self.n_users, self.n_items)
        if cfg.t2 is not None:
            Wn = shifted_normalize(train, cfg.t2)
        else:
            Wn = symmetric_normalize(train, allow_isolates=True)
        bu, bi, f = svdgcn_embed(Wn, self.K, cfg.t1, rng.derive("svd"))
        self.vmax = float(f.S[0])
        self.vmax_ok = None
        if cfg.t2 is not None:
            bound = vmax_bound(train, cfg.t2)
            self.vmax_ok = self.vmax <= bound + 1e-9
            if not self.vmax_ok:
                log.warning("largest singular value %.6f exceeds bound %.6f", self.vmax, bound)
        self.register_buffer("base_u", torch.from_numpy(bu))
        self.register_buffer("base_i", torch.from_numpy(bi))
        self.weight = nn.Parameter(torch.randn(self.K, cfg.embed_dim, generator=self.init_generator, dtype=DTYPE)
                                   * cfg.init_std)
        self.user_proj = project(train, USER)
        self.item_proj = project(train, ITEM)
        self.np_gen = rng.derive("pairs").generator()

    def final_embeddings(self):
        return self.base_u @ self.weight, self.base_i @ self.weight

    def l2_term(self, batch, l2):
        return l2 * self.weight.pow(2).sum() / 2

    def loss(self, batch, l2):
        cfg = self.config
        Eu, Ei = self.final_embeddings()
        out = {"bpr": losses.bpr(dot_scores(Eu, Ei, batch.users, batch.pos), dot_scores(Eu, Ei, batch.users, batch.neg))}
        a, p, n = same_side_triples(self.user_proj, torch.unique(batch.users).numpy(), self.np_gen)
        out["ul"] = cfg.ul_weight * losses.same_side_pairwise(Eu[a], Eu[p], Eu[n], cfg.literal_ul_sign)
        a, p, n = same_side_triples(self.item_proj, torch.unique(batch.pos).numpy(), self.np_gen)
        out["il"] = cfg.il_weight * losses.same_side_pairwise(Ei[a], Ei[p], Ei[n], cfg.literal_ul_sign)
        out["l2"] = self.l2_term(batch, l2)
        return out
