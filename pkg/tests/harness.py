"""Shared measurement code for the unit tests and the acceptance suite."""

import numpy as np
import torch

from topocf import losses
from topocf.graph import InteractionMatrix
from topocf.models import MESSAGE_PASSING, ModelConfig, build_model
from topocf.numerics import RngStream

import oracles

PROPAGATION_KINDS = MESSAGE_PASSING
GRAD_TOL = 1e-4


def rand(*shape, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=g, dtype=torch.float64)


def random_small_graph(seed, max_nodes=20):
    rng = np.random.default_rng(seed)
    U = int(rng.integers(2, max_nodes - 1))
    I = int(rng.integers(2, max_nodes - U + 1))
    dense = rng.random((U, I)) < rng.uniform(0.2, 0.7)
    if not dense.any():
        dense[0, 0] = True
    return InteractionMatrix.from_dense(dense)


def propagation_error(kind, R, seed=0):
    """Max |matrix-form - node-form| over all layers for one model kind on one graph."""
    extra = {"intents": 2, "routing_rounds": 2} if kind == "DGCF" else {}
    if kind in ("SimGCL", "XSimGCL"):
        extra["noise_eps"] = 0.3
    cfg = ModelConfig(kind=kind, layers=2, embed_dim=4, **extra)
    model = build_model(cfg, R, RngStream(seed))
    model.eval()
    with torch.no_grad():
        if kind == "LightGCL":
            layers = model.propagate(model.adj)  # the full graph, no edge drop
        else:
            layers = model.propagate()
    params = None
    if kind == "NGCF":
        params = {k: [p.detach().numpy() for p in getattr(model, k)] for k in ("W_neigh", "W_inter", "bias")}
    E0 = model.ego().detach().numpy()
    ref = oracles.node_form_layers(kind, R, E0, 2, params, intents=2, rounds=2)
    return max(float(np.abs(a.detach().numpy() - b).max()) for a, b in zip(layers, ref))


def noise_free_error(kind, R, seed=0):
    """SimGCL/XSimGCL with eps = 0 against LightGCN with the same initialization."""
    light = build_model(ModelConfig(kind="LightGCN", layers=3, embed_dim=4), R, RngStream(seed))
    noisy = build_model(ModelConfig(kind=kind, layers=3, embed_dim=4, noise_eps=0.0), R, RngStream(seed))
    with torch.no_grad():
        a = light.propagate()
        b = noisy.propagate(perturb=True)
    return max(float((x - y).abs().max()) for x, y in zip(a, b))


def _split(x, *shapes):
    out, k = [], 0
    for s in shapes:
        n = int(np.prod(s))
        out.append(x[k:k + n].view(*s))
        k += n
    return out


GRADIENT_CASES = {
    "bpr": (8, lambda x: losses.bpr(*_split(x, (4,), (4,)))),
    "infonce": (24, lambda x: losses.infonce(*_split(x, (4, 3), (4, 3)), 0.3)),
    "infonce_exclusive": (24, lambda x: losses.infonce(*_split(x, (4, 3), (4, 3)), 0.3, True)),
    "uniformity": (15, lambda x: losses.uniformity(x.view(5, 3))),
    "alignment": (36, lambda x: losses.alignment_graphau(_split(x, (3, 2), (3, 2), (3, 2)),
                                                         _split(x[18:], (3, 2), (3, 2), (3, 2)), 0.5)),
    "ultragcn_constraint": (8, lambda x: losses.ultragcn_constraint(
        *_split(x, (4,), (4,)), torch.tensor([0.5, 1.0, 2.0, 0.3], dtype=torch.float64),
        torch.tensor([1.0, 0.2, 0.7, 0.4], dtype=torch.float64))),
    "ultragcn_item": (6, lambda x: losses.ultragcn_item(
        x.view(2, 3), torch.tensor([[0.5, 0.2, 0.0], [1.0, 0.3, 0.1]], dtype=torch.float64), 2)),
    "svdgcn_same_side": (27, lambda x: losses.same_side_pairwise(*_split(x, (3, 3), (3, 3), (3, 3)))),
    "hinge": (4, lambda x: losses.hinge(x * 0.1)),
    "distance_correlation": (30, lambda x: losses.distance_correlation(*_split(x, (6, 2), (6, 3)))),
    "independence": (36, lambda x: losses.independence(list(_split(x, (6, 2), (6, 2), (6, 2))))),
}


def gradient_error(name, seed):
    """Relative autograd vs central-difference error for one loss at one random point."""
    n, f = GRADIENT_CASES[name]
    x = rand(n, seed=seed)
    if name == "hinge":
        x = x + torch.sign(x) * 0.5  # scores 0.1 * x stay below the margin of 1 and away from 0
    return oracles.finite_difference_check(f, x)
