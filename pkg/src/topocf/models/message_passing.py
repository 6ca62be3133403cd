"""Recommenders built on iterative message passing over the normalized bipartite adjacency."""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .. import losses
from ..errors import EmptyView
from ..graph import InteractionMatrix, NormalizedInteractionMatrix, symmetric_normalize
from ..numerics import RngStream, as_generator, truncated_svd
from ..sampler import edge_dropout_mask, keep_count
from .base import DTYPE, Batch, GraphRecommender, bipartite_adjacency, dot_scores, pool

LEAKY_SLOPE = 0.2


class LightGCN(GraphRecommender):
    kind = "LightGCN"

    def __init__(self, config, train: InteractionMatrix, rng: RngStream):
        super().__init__(config, train, rng)
        self.W = symmetric_normalize(train, allow_isolates=True)
        self.adj = bipartite_adjacency(self.W.weights)

    def step(self, A, E, layer: int):
        return torch.sparse.mm(A, E)

    def propagate(self, adj=None):
        """[E^0, ..., E^L]; ``adj`` is one adjacency or a per-layer list."""
        adj = self.adj if adj is None else adj
        out = [self.ego()]
        for l in range(self.config.layers):
            A = adj[l] if isinstance(adj, (list, tuple)) else adj
            out.append(self.step(A, out[-1], l))
        return out

    def pooled(self, layers=None):
        return pool(self.propagate() if layers is None else layers, self.config.pooling)

    def final_embeddings(self):
        return self.split(self.pooled())

    def rec_loss(self, Eu, Ei, batch: Batch):
        return losses.bpr(dot_scores(Eu, Ei, batch.users, batch.pos), dot_scores(Eu, Ei, batch.users, batch.neg))

    def loss(self, batch: Batch, l2: float) -> dict:
        Eu, Ei = self.split(self.pooled())
        return {"bpr": self.rec_loss(Eu, Ei, batch), "l2": self.l2_term(batch, l2)}


def _xavier(fan_in, fan_out, gen):
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return (torch.rand(fan_in, fan_out, generator=gen, dtype=DTYPE) * 2 - 1) * a


class NGCF(LightGCN):
    """LeakyReLU((A E) W_neigh + ((A E) * E) W_inter + b) per layer, concatenated."""

    kind = "NGCF"

    def __init__(self, config, train, rng):
        super().__init__(config, train, rng)
        F_, gen = self.config.embed_dim, self.init_generator
        L = self.config.layers
        self.W_neigh = nn.ParameterList([nn.Parameter(_xavier(F_, F_, gen)) for _ in range(L)])
        self.W_inter = nn.ParameterList([nn.Parameter(_xavier(F_, F_, gen)) for _ in range(L)])
        self.bias = nn.ParameterList([nn.Parameter(torch.zeros(F_, dtype=DTYPE)) for _ in range(L)])

    def step(self, A, E, layer):
        side = torch.sparse.mm(A, E)
        h = side @ self.W_neigh[layer] + (side * E) @ self.W_inter[layer] + self.bias[layer]
        return F.leaky_relu(h, LEAKY_SLOPE)


class DGCF(LightGCN):
    """Intent-disentangled propagation with iterative routing over edges.

    Edge-intent logits start at zero on every forward pass and carry across
    layers. Each routing round turns them into per-edge intent weights (softmax
    over intents), degree-normalizes every intent graph, propagates each
    embedding chunk on its intent graph, then adds the affinity
    <tanh(new user chunk), item chunk> to the logits.
    """

    kind = "DGCF"

    def __init__(self, config, train, rng):
        super().__init__(config, train, rng)
        eu, ei = train.edges()
        self.eu = torch.from_numpy(eu)
        self.ei = torch.from_numpy(ei)
        self.routing_history = []

    @property
    def chunk(self):
        return self.config.embed_dim // self.config.intents

    def intent_weights(self, P):
        """Per-intent normalized edge weights a_t / sqrt(d_u[t] d_i[t])."""
        U, I = self.n_users, self.n_items
        du = torch.zeros(U, P.shape[1], dtype=DTYPE).index_add(0, self.eu, P)
        di = torch.zeros(I, P.shape[1], dtype=DTYPE).index_add(0, self.ei, P)
        return P / torch.sqrt(du[self.eu] * di[self.ei])

    def propagate(self, adj=None):
        T, c = self.config.intents, self.chunk
        E0 = self.ego()
        logits = torch.zeros(self.eu.shape[0], T, dtype=DTYPE)
        self.routing_history = []
        layers = [E0]
        for _ in range(self.config.layers):
            Eu, Ei = self.split(layers[-1])
            for _ in range(self.config.routing_rounds):
                P = torch.softmax(logits, dim=1)
                self.routing_history.append(P.detach().clone())
                w = self.intent_weights(P)
                new_u, new_i = [], []
                for t in range(T):
                    sl = slice(t * c, (t + 1) * c)
                    wt = w[:, t:t + 1]
                    new_u.append(torch.zeros(self.n_users, c, dtype=DTYPE).index_add(0, self.eu, wt * Ei[self.ei, sl]))
                    new_i.append(torch.zeros(self.n_items, c, dtype=DTYPE).index_add(0, self.ei, wt * Eu[self.eu, sl]))
                aff = torch.stack([(torch.tanh(new_u[t][self.eu]) * Ei[self.ei, t * c:(t + 1) * c]).sum(1)
                                   for t in range(T)], dim=1)
                logits = logits + aff
            layers.append(torch.cat([torch.cat(new_u, 1), torch.cat(new_i, 1)], 0))
        return layers

    def loss(self, batch, l2):
        E = self.pooled()
        Eu, Ei = self.split(E)
        out = {"bpr": self.rec_loss(Eu, Ei, batch)}
        rows = torch.cat([Eu[torch.unique(batch.users)], Ei[torch.unique(torch.cat([batch.pos, batch.neg]))]])
        if rows.shape[0] >= 4 and self.config.intents >= 2:
            c = self.chunk
            chunks = [rows[:, t * c:(t + 1) * c] for t in range(self.config.intents)]
            out["idl"] = self.config.idl_weight * losses.independence(chunks)
        out["l2"] = self.l2_term(batch, l2)
        return out


def sgl_make_views(R: InteractionMatrix, strategy: str, rate: float, rng, layers: int = 1):
    """Two independently augmented, renormalized views of R on the same index space.

    ND drops keep_count-complement nodes per side, ED drops edges, RW draws an
    independent ED graph per layer (each view is then a list of ``layers``).
    """
    if not 0 <= rate < 1:
        raise ValueError("rate must lie in [0, 1)")
    gen = as_generator(rng)
    eu, ei = R.edges()

    def subgraph(mask):
        g = InteractionMatrix.from_edges(eu[mask], ei[mask], R.n_users, R.n_items)
        if g.n_edges == 0:
            raise EmptyView(f"{strategy} view with rate {rate} has no edges")
        return symmetric_normalize(g, allow_isolates=True)

    def one_view():
        if strategy == "ND":
            ku = np.zeros(R.n_users, dtype=bool)
            ku[gen.permutation(R.n_users)[:keep_count(R.n_users, rate)]] = True
            ki = np.zeros(R.n_items, dtype=bool)
            ki[gen.permutation(R.n_items)[:keep_count(R.n_items, rate)]] = True
            return subgraph(ku[eu] & ki[ei])
        if strategy == "ED":
            return subgraph(edge_dropout_mask(R.n_edges, rate, gen))
        if strategy == "RW":
            return [subgraph(edge_dropout_mask(R.n_edges, rate, gen)) for _ in range(layers)]
        raise ValueError(f"unknown augmentation {strategy!r}")

    return one_view(), one_view()


def _to_adj(view):
    if isinstance(view, list):
        return [bipartite_adjacency(v.weights) for v in view]
    return bipartite_adjacency(view.weights)


class SGL(LightGCN):
    """LightGCN with InfoNCE between two structurally augmented views, refreshed every epoch."""

    kind = "SGL"
    MAX_VIEW_RETRIES = 10

    def __init__(self, config, train, rng):
        super().__init__(config, train, rng)
        self.views = None

    def on_epoch_start(self, epoch):
        cfg = self.config
        for attempt in range(self.MAX_VIEW_RETRIES):
            try:
                v1, v2 = sgl_make_views(self.train_graph, cfg.augmentation, cfg.aug_rate,
                                        self.rng.derive("views", epoch, attempt), cfg.layers)
                self.views = (_to_adj(v1), _to_adj(v2))
                return
            except EmptyView:
                continue
        raise EmptyView(f"no non-empty augmented views after {self.MAX_VIEW_RETRIES} attempts")

    def loss(self, batch, l2):
        if self.views is None:
            self.on_epoch_start(0)
        Eu, Ei = self.split(self.pooled())
        out = {"bpr": self.rec_loss(Eu, Ei, batch)}
        a_u, a_i = self.split(self.pooled(self.propagate(self.views[0])))
        b_u, b_i = self.split(self.pooled(self.propagate(self.views[1])))
        out["ssl"] = self.config.cl_weight * _two_sided_infonce(a_u, a_i, b_u, b_i, batch, self.config)
        out["l2"] = self.l2_term(batch, l2)
        return out


def _two_sided_infonce(a_u, a_i, b_u, b_i, batch, cfg):
    users = torch.unique(batch.users)
    items = torch.unique(batch.pos)
    total = 0.0
    if users.numel() >= 2:
        total = total + losses.infonce(a_u[users], b_u[users], cfg.temperature, cfg.infonce_exclude_positive)
    if items.numel() >= 2:
        total = total + losses.infonce(a_i[items], b_i[items], cfg.temperature, cfg.infonce_exclude_positive)
    return total if torch.is_tensor(total) else torch.zeros((), dtype=DTYPE)


class SimGCL(LightGCN):
    """LightGCN plus per-layer noise eps * normalize(uniform) * sign(E^{l-1}) for the contrastive views."""

    kind = "SimGCL"

    def __init__(self, config, train, rng):
        super().__init__(config, train, rng)
        self.perturb = False
        self.last_noise = []
        deg = train.item_degrees
        frac = self.config.popular_fraction or 0.0
        n_pop = max(2, int(math.ceil(frac * self.n_items))) if frac > 0 else 0
        order = np.lexsort((np.arange(self.n_items), -deg))
        self.popular = torch.from_numpy(order[:min(n_pop, self.n_items)].astype(np.int64))

    def noise_like(self, E_prev):
        u = torch.rand(E_prev.shape, generator=self.gen, dtype=DTYPE)
        return self.config.noise_eps * F.normalize(u, dim=1) * torch.sign(E_prev)

    def step(self, A, E, layer):
        out = torch.sparse.mm(A, E)
        if self.perturb and self.config.noise_eps > 0:
            delta = self.noise_like(E)
            self.last_noise.append(delta.detach())
            out = out + delta
        return out

    def propagate(self, adj=None, perturb: bool = False):
        self.perturb, self.last_noise = perturb, []
        try:
            return super().propagate(adj)
        finally:
            self.perturb = False

    def loss(self, batch, l2):
        cfg = self.config
        Eu, Ei = self.split(self.pooled())
        out = {"bpr": self.rec_loss(Eu, Ei, batch)}
        a_u, a_i = self.split(self.pooled(self.propagate(perturb=True)))
        b_u, b_i = self.split(self.pooled(self.propagate(perturb=True)))
        out["cl"] = cfg.cl_weight * _two_sided_infonce(a_u, a_i, b_u, b_i, batch, cfg)
        if self.popular.numel() >= 2:
            n = len(batch)
            a = self.popular[torch.randint(self.popular.numel(), (n,), generator=self.gen)]
            b = self.popular[torch.randint(self.popular.numel(), (n,), generator=self.gen)]
            out["unl"] = cfg.unl_weight * losses.uniformity(Ei, (a, b))
        out["l2"] = self.l2_term(batch, l2)
        return out


class XSimGCL(SimGCL):
    """One perturbed propagation serves both BPR and a cross-layer InfoNCE (final vs layer l*)."""

    kind = "XSimGCL"

    def loss(self, batch, l2):
        cfg = self.config
        layers = self.propagate(perturb=True)
        Eu, Ei = self.split(self.pooled(layers))
        out = {"bpr": self.rec_loss(Eu, Ei, batch)}
        Cu, Ci = self.split(layers[cfg.contrast_layer])
        out["cl"] = cfg.cl_weight * _two_sided_infonce(Eu, Ei, Cu, Ci, batch, cfg)
        out["l2"] = self.l2_term(batch, l2)
        return out


class LightGCL(LightGCN):
    """Local view LeakyReLU(drop(A) E) + E contrasted with a global view through the rank-K SVD of A."""

    kind = "LightGCL"

    def __init__(self, config, train, rng):
        super().__init__(config, train, rng)
        K = min(self.config.svd_rank, self.n_users, self.n_items)
        f = truncated_svd(self.W, K, rng=rng.derive("svd"))
        self.register_buffer("svd_u", torch.from_numpy(f.U))
        self.register_buffer("svd_s", torch.from_numpy(f.S))
        self.register_buffer("svd_v", torch.from_numpy(f.V))
        self.drop_edges = False

    def dropped_adjacency(self):
        rate = self.config.aug_rate
        if not self.drop_edges or rate == 0:
            return self.adj
        idx, vals = self.adj.indices(), self.adj.values()
        keep = torch.rand(vals.shape, generator=self.gen, dtype=DTYPE) >= rate
        return torch.sparse_coo_tensor(idx[:, keep], vals[keep], self.adj.shape,
                                       check_invariants=False).coalesce()

    def step(self, A, E, layer):
        return F.leaky_relu(torch.sparse.mm(A, E), LEAKY_SLOPE) + E

    def propagate(self, adj=None):
        return super().propagate(self.dropped_adjacency() if adj is None else adj)

    def global_view(self, local_layers):
        """G^0 = E^0; G^l = LeakyReLU(U_K S_K V_K^T E^{l-1}) evaluated right to left."""
        out = [local_layers[0]]
        s = self.svd_s.unsqueeze(1)
        for E in local_layers[:-1]:
            Eu, Ei = self.split(E)
            Gu = self.svd_u @ (s * (self.svd_v.T @ Ei))
            Gi = self.svd_v @ (s * (self.svd_u.T @ Eu))
            out.append(F.leaky_relu(torch.cat([Gu, Gi], 0), LEAKY_SLOPE))
        return out

    def loss(self, batch, l2):
        cfg = self.config
        self.drop_edges = self.training
        try:
            local = self.propagate()
        finally:
            self.drop_edges = False
        glob = self.global_view(local)
        Eu, Ei = self.split(self.pooled(local))
        out = {"hinge": losses.hinge(dot_scores(Eu, Ei, batch.users, batch.pos))}
        cl = torch.zeros((), dtype=DTYPE)
        for E, G in zip(local, glob):
            a_u, a_i = self.split(E)
            b_u, b_i = self.split(G)
            cl = cl + _two_sided_infonce(a_u, a_i, b_u, b_i, batch, cfg)
        out["cl"] = cfg.cl_weight * cl
        out["l2"] = self.l2_term(batch, l2)
        return out


class GraphAU(LightGCN):
    """LightGCN propagation trained with layer-weighted alignment plus uniformity."""

    kind = "GraphAU"

    def loss(self, batch, l2):
        cfg = self.config
        layers = self.propagate()
        ul, il = [], []
        for E in layers:
            Eu, Ei = self.split(E)
            u, i = Eu[batch.users], Ei[batch.pos]
            if cfg.align_normalized:
                u, i = F.normalize(u, dim=1), F.normalize(i, dim=1)
            ul.append(u)
            il.append(i)
        out = {"al": losses.alignment_graphau(ul, il, cfg.t2)}
        Pu, Pi = self.split(self.pooled(layers))
        users, items = torch.unique(batch.users), torch.unique(batch.pos)
        unl = torch.zeros((), dtype=DTYPE)
        if users.numel() >= 2:
            unl = unl + losses.uniformity(Pu[users]) / 2
        if items.numel() >= 2:
            unl = unl + losses.uniformity(Pi[items]) / 2
        out["unl"] = cfg.t1 / 2 * unl
        out["l2"] = self.l2_term(batch, l2)
        return out
