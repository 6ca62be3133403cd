"""Shared substrate: model configuration, pooling, sparse adjacency and the recommender base class."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
import torch
import torch.nn as nn

from ..errors import ConfigError, UnsupportedForKind
from ..graph import InteractionMatrix, NormalizedInteractionMatrix, symmetric_normalize
from ..numerics import RngStream

DTYPE = torch.float64

KINDS = ("NGCF", "DGCF", "LightGCN", "SGL", "UltraGCN", "GFCF", "SVDGCN",
         "SimGCL", "LightGCL", "GraphAU", "XSimGCL")
MESSAGE_PASSING = ("NGCF", "DGCF", "LightGCN", "SGL", "SimGCL", "LightGCL", "GraphAU", "XSimGCL")
POOLINGS = ("sum", "w-sum", "mean", "concat", "last")

# depth and pooling per kind; None means the kind has no layer stack
KIND_DEFAULTS = {
    "NGCF": (3, "concat"),
    "DGCF": (1, "sum"),
    "LightGCN": (3, "w-sum"),
    "SGL": (3, "w-sum"),
    "UltraGCN": (None, None),
    "GFCF": (None, None),
    "SVDGCN": (None, None),
    "SimGCL": (3, "mean"),
    "LightGCL": (2, "sum"),
    "GraphAU": (4, "w-sum"),
    "XSimGCL": (5, "w-sum"),
}

# kind-specific knobs: field -> (kinds allowed to set it, default)
KIND_FIELDS = {
    "intents": (("DGCF",), 4),
    "routing_rounds": (("DGCF",), 2),
    "noise_eps": (("SimGCL", "XSimGCL"), 0.1),
    "contrast_layer": (("XSimGCL",), 1),
    "temperature": (("SGL", "SimGCL", "XSimGCL", "LightGCL"), 0.2),
    "augmentation": (("SGL",), "ED"),
    "aug_rate": (("SGL", "LightGCL"), 0.1),
    "gfcf_t": (("GFCF",), 0.3),
    "t1": (("SVDGCN", "GraphAU"), 1.0),
    "t2": (("SVDGCN", "GraphAU"), None),
    "item_topk": (("UltraGCN",), 10),
    "popular_fraction": (("SimGCL",), 0.1),
}
_T2_DEFAULTS = {"GraphAU": 0.5, "SVDGCN": None}
_AUG_RATE_DEFAULTS = {"SGL": 0.1, "LightGCL": 0.25}


def canonical_kind(name: str) -> str:
    key = name.replace("-", "").replace("_", "").lower()
    for k in KINDS:
        if k.lower() == key:
            return k
    raise ConfigError(f"unknown model kind {name!r}; expected one of {', '.join(KINDS)}")


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of one recommender.

    Fields left as ``None`` take per-kind defaults in :meth:`resolved`;
    setting a kind-specific field on another kind is a configuration error.
    """

    kind: str
    layers: Optional[int] = None
    embed_dim: int = 64
    pooling: Optional[str] = None
    init_std: float = 0.1
    svd_rank: int = 64
    intents: Optional[int] = None
    routing_rounds: Optional[int] = None
    noise_eps: Optional[float] = None
    contrast_layer: Optional[int] = None
    temperature: Optional[float] = None
    augmentation: Optional[str] = None
    aug_rate: Optional[float] = None
    gfcf_t: Optional[float] = None
    t1: Optional[float] = None
    t2: Optional[float] = None
    item_topk: Optional[int] = None
    popular_fraction: Optional[float] = None
    cl_weight: float = 0.1
    unl_weight: float = 0.5
    idl_weight: float = 0.01
    constraint_weight: float = 1.0
    il_weight: float = 0.1
    ul_weight: float = 0.1
    align_normalized: bool = True
    infonce_exclude_positive: bool = False
    literal_ul_sign: bool = False

    def resolved(self) -> "ModelConfig":
        kind = canonical_kind(self.kind)
        updates = {"kind": kind}
        for name, (kinds, default) in KIND_FIELDS.items():
            value = getattr(self, name)
            if value is not None and kind not in kinds:
                raise UnsupportedForKind(f"{name} is not a {kind} parameter")
            if value is None and kind in kinds:
                if name == "t2":
                    default = _T2_DEFAULTS[kind]
                elif name == "aug_rate":
                    default = _AUG_RATE_DEFAULTS[kind]
                updates[name] = default
        depth, pooling = KIND_DEFAULTS[kind]
        if depth is None:
            if self.layers is not None or self.pooling is not None:
                raise UnsupportedForKind(f"{kind} has no layer stack")
        else:
            updates["layers"] = depth if self.layers is None else self.layers
            updates["pooling"] = pooling if self.pooling is None else self.pooling
        cfg = replace(self, **updates)
        cfg._validate()
        return cfg

    def _validate(self):
        if self.embed_dim < 1:
            raise ConfigError("embed_dim must be >= 1")
        if self.svd_rank < 1:
            raise ConfigError("svd_rank must be >= 1")
        if self.layers is not None and self.layers < (1 if self.kind in MESSAGE_PASSING else 0):
            raise ConfigError("message-passing kinds need layers >= 1")
        if self.pooling is not None and self.pooling not in POOLINGS:
            raise ConfigError(f"unknown pooling {self.pooling!r}")
        if self.temperature is not None and self.temperature <= 0:
            raise ConfigError("temperature must be > 0")
        if self.noise_eps is not None and self.noise_eps < 0:
            raise ConfigError("noise_eps must be >= 0")
        if self.contrast_layer is not None and not 0 <= self.contrast_layer < self.layers:
            raise ConfigError("contrast_layer must satisfy 0 <= l* < layers")
        if self.intents is not None and (self.intents < 1 or self.embed_dim % self.intents):
            raise ConfigError("intents must divide embed_dim")
        if self.routing_rounds is not None and self.routing_rounds < 1:
            raise ConfigError("routing_rounds must be >= 1")
        if self.augmentation is not None and self.augmentation not in ("ND", "ED", "RW"):
            raise ConfigError("augmentation must be ND, ED or RW")
        if self.aug_rate is not None and not 0 <= self.aug_rate < 1:
            raise ConfigError("aug_rate must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def pool(layers, kind: str):
    """Combine per-layer embeddings [E^0 .. E^L].

    ``w-sum`` weights every layer by 1/(L+1); ``mean`` averages the propagated
    layers 1..L (the ego layer alone when L = 0).
    """
    if not layers:
        raise ValueError("need at least one layer")
    if len(layers) == 1:
        return layers[0]
    if kind == "sum":
        return torch.stack(layers).sum(0)
    if kind == "w-sum":
        return torch.stack(layers).mean(0)
    if kind == "mean":
        return torch.stack(layers[1:]).mean(0)
    if kind == "concat":
        return torch.cat(layers, dim=1)
    if kind == "last":
        return layers[-1]
    raise ValueError(f"unknown pooling {kind!r}")


def bipartite_adjacency(W: sp.spmatrix) -> torch.Tensor:
    """Sparse (U+I) x (U+I) tensor [[0, W], [W^T, 0]]."""
    W = sp.coo_matrix(W)
    U, I = W.shape
    rows = np.concatenate([W.row, W.col + U])
    cols = np.concatenate([W.col + U, W.row])
    vals = np.concatenate([W.data, W.data])
    idx = torch.from_numpy(np.vstack([rows, cols]).astype(np.int64))
    return torch.sparse_coo_tensor(idx, torch.from_numpy(vals.astype(np.float64)), (U + I, U + I),
                                   check_invariants=False).coalesce()


def normalized_adjacency(R: InteractionMatrix, allow_isolates: bool = False) -> torch.Tensor:
    return bipartite_adjacency(symmetric_normalize(R, allow_isolates).weights)


@dataclass
class Batch:
    users: torch.Tensor
    pos: torch.Tensor
    neg: torch.Tensor

    def __len__(self):
        return int(self.users.shape[0])


class GraphRecommender(nn.Module):
    """Base class: embedding tables over the training graph and dot-product scoring."""

    kind = "base"
    trainable = True
    uses_embeddings = True

    def __init__(self, config: ModelConfig, train: InteractionMatrix, rng: RngStream):
        super().__init__()
        self.config = config.resolved()
        self.train_graph = train
        self.n_users, self.n_items = train.n_users, train.n_items
        self.rng = rng
        self.gen = rng.derive("forward").torch_generator()
        init = rng.derive("init").torch_generator()
        self.init_generator = init
        if self.uses_embeddings:
            F_, std = self.config.embed_dim, self.config.init_std
            self.user_emb = nn.Parameter(torch.randn(self.n_users, F_, generator=init, dtype=DTYPE) * std)
            self.item_emb = nn.Parameter(torch.randn(self.n_items, F_, generator=init, dtype=DTYPE) * std)

    # -- embeddings
    def ego(self) -> torch.Tensor:
        return torch.cat([self.user_emb, self.item_emb], dim=0)

    def split(self, E):
        return E[:self.n_users], E[self.n_users:]

    def propagate(self, adj=None):
        raise UnsupportedForKind(f"{self.kind} has no iterative message passing")

    def final_embeddings(self):
        """(users x D, items x D) used for scoring, without any stochastic augmentation."""
        raise NotImplementedError

    @torch.no_grad()
    def score_all(self, users=None) -> torch.Tensor:
        was = self.training
        self.eval()
        try:
            Eu, Ei = self.final_embeddings()
        finally:
            self.train(was)
        if users is not None:
            Eu = Eu[torch.as_tensor(users, dtype=torch.long)]
        return Eu @ Ei.T

    # -- training hooks
    def on_epoch_start(self, epoch: int):
        pass

    def loss(self, batch: Batch, l2: float) -> dict:
        raise NotImplementedError

    def l2_term(self, batch: Batch, l2: float):
        if l2 == 0:
            return torch.zeros((), dtype=DTYPE)
        from ..losses import l2_rows
        return l2 * l2_rows(self.user_emb[batch.users], self.item_emb[batch.pos], self.item_emb[batch.neg])


def dot_scores(Eu, Ei, users, items):
    return (Eu[users] * Ei[items]).sum(1)
