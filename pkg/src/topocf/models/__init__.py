"""The eleven graph collaborative-filtering recommenders."""

from ..numerics import RngStream
from .base import (DTYPE, KINDS, MESSAGE_PASSING, Batch, GraphRecommender, ModelConfig, bipartite_adjacency,
                   canonical_kind, pool)
from .message_passing import DGCF, NGCF, SGL, GraphAU, LightGCL, LightGCN, SimGCL, XSimGCL, sgl_make_views
from .spectral import GFCF, SVDGCN, gfcf_score, same_side_triples, svdgcn_embed, vmax_bound
from .ultragcn import UltraGCN, edge_coefficient, item_neighbors

REGISTRY = {cls.kind: cls for cls in (NGCF, DGCF, LightGCN, SGL, UltraGCN, GFCF, SVDGCN,
                                      SimGCL, LightGCL, GraphAU, XSimGCL)}


def build_model(config: ModelConfig, train, rng=None) -> GraphRecommender:
    """Instantiate and initialize the recommender named by ``config.kind``."""
    cfg = config.resolved()
    rng = rng if isinstance(rng, RngStream) else RngStream(0 if rng is None else int(rng))
    return REGISTRY[cfg.kind](cfg, train, rng)


__all__ = ["KINDS", "MESSAGE_PASSING", "REGISTRY", "Batch", "GraphRecommender", "ModelConfig", "build_model",
           "pool", "canonical_kind", "bipartite_adjacency", "sgl_make_views", "gfcf_score", "svdgcn_embed",
           "vmax_bound", "same_side_triples", "edge_coefficient", "item_neighbors", "DTYPE"] + list(REGISTRY)
