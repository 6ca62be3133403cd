"""UltraGCN: one degree-weighted hop standing in for infinite-layer propagation."""

from __future__ import annotations

import numpy as np
import torch

from .. import losses
from ..errors import ZeroDegreeNode
from ..graph import ITEM, InteractionMatrix, project
from ..numerics import RngStream
from .base import DTYPE, Batch, GraphRecommender, dot_scores


def edge_coefficient(d_src, d_dst):
    """sqrt(d_src + 1) / (d_src * sqrt(d_dst + 1))."""
    d_src = np.asarray(d_src, dtype=float)
    d_dst = np.asarray(d_dst, dtype=float)
    return np.sqrt(d_src + 1) / (d_src * np.sqrt(d_dst + 1))


def item_neighbors(R: InteractionMatrix, k: int):
    """Top-k co-occurring items per item and their weights.

    Weight of neighbor j of item i: c_ij / (s_i - c_ii) * sqrt(s_i / s_j), where
    s is the weighted degree of the item projection (diagonal included).
    Rows shorter than k are padded with index 0 and weight 0.
    """
    P = project(R, ITEM)
    s = P.weighted_degree.astype(float)
    I = P.n_nodes
    idx = np.zeros((I, k), dtype=np.int64)
    w = np.zeros((I, k))
    for i in range(I):
        lo, hi = P.counts.indptr[i], P.counts.indptr[i + 1]
        cols, vals = P.counts.indices[lo:hi], P.counts.data[lo:hi]
        if cols.size == 0:
            continue
        order = np.lexsort((cols, -vals))[:k]
        cols, vals = cols[order], vals[order].astype(float)
        idx[i, :cols.size] = cols
        w[i, :cols.size] = vals / (s[i] - P.self_counts[i]) * np.sqrt(s[i] / s[cols])
    return idx, w


class UltraGCN(GraphRecommender):
    kind = "UltraGCN"

    def __init__(self, config, train: InteractionMatrix, rng: RngStream):
        super().__init__(config, train, rng)
        du, di = train.user_degrees, train.item_degrees
        if (du == 0).any() or (di == 0).any():
            raise ZeroDegreeNode("UltraGCN coefficients need every node to have an edge")
        eu, ei = train.edges()
        self.eu, self.ei = torch.from_numpy(eu), torch.from_numpy(ei)
        self.register_buffer("coef_u", torch.from_numpy(edge_coefficient(du[eu], di[ei])))
        self.register_buffer("coef_i", torch.from_numpy(edge_coefficient(di[ei], du[eu])))
        self.register_buffer("deg_u", torch.from_numpy(du.astype(float)))
        self.register_buffer("deg_i", torch.from_numpy(di.astype(float)))
        nbr, w = item_neighbors(train, self.config.item_topk)
        self.register_buffer("nbr_idx", torch.from_numpy(nbr))
        self.register_buffer("nbr_w", torch.from_numpy(w))

    def forward_embeddings(self):
        """(E^_U, E^_I) after the single weighted hop."""
        Eu = torch.zeros_like(self.user_emb).index_add(0, self.eu, self.coef_u.unsqueeze(1) * self.item_emb[self.ei])
        Ei = torch.zeros_like(self.item_emb).index_add(0, self.ei, self.coef_i.unsqueeze(1) * self.user_emb[self.eu])
        return Eu, Ei

    def final_embeddings(self):
        return self.forward_embeddings()

    def pair_weight(self, users, items):
        du, di = self.deg_u[users], self.deg_i[items]
        return torch.sqrt(du + 1) / (du * torch.sqrt(di + 1))

    def loss(self, batch, l2):
        cfg = self.config
        Eu, Ei = self.forward_embeddings()
        pos = dot_scores(Eu, Ei, batch.users, batch.pos)
        neg = dot_scores(Eu, Ei, batch.users, batch.neg)
        out = {"bpr": losses.bpr(pos, neg)}
        out["cl"] = cfg.constraint_weight * losses.ultragcn_constraint(
            pos, neg, self.pair_weight(batch.users, batch.pos), self.pair_weight(batch.users, batch.neg))
        nbr = self.nbr_idx[batch.pos]  # B x K
        s = (Eu[batch.users].unsqueeze(1) * Ei[nbr]).sum(-1)
        out["il"] = cfg.il_weight * losses.ultragcn_item(s, self.nbr_w[batch.pos], len(batch))
        out["l2"] = self.l2_term(batch, l2)
        return out
