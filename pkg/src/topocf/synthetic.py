"""Synthetic interaction graphs and power-law draws for tests, scripts and smoke runs."""

from __future__ import annotations

import numpy as np
from scipy.special import zeta

from .graph import InteractionMatrix
from .numerics import as_generator


def planted_blocks(n_users: int = 200, n_items: int = 200, n_blocks: int = 2, p_in: float = 0.5,
                   p_out: float = 0.02, rng=0) -> InteractionMatrix:
    """Users and items split into equal blocks; edges appear with p_in inside a block, p_out across."""
    gen = as_generator(rng)
    bu = np.arange(n_users) * n_blocks // n_users
    bi = np.arange(n_items) * n_blocks // n_items
    prob = np.where(bu[:, None] == bi[None, :], p_in, p_out)
    u, i = np.nonzero(gen.random((n_users, n_items)) < prob)
    return InteractionMatrix.from_edges(u, i, n_users, n_items)


def scale_free(n_users: int = 600, n_items: int = 400, n_edges: int = 12000, exponent: float = 2.5,
               rng=0, with_timestamps: bool = False) -> InteractionMatrix:
    """Chung-Lu style bipartite graph with power-law expected degrees on both sides.

    Node k gets weight (k + 1)^(-1/(exponent - 1)); endpoints of each of the
    ``n_edges`` draws are chosen proportionally to these weights and duplicate
    pairs collapse, so the realized edge count is somewhat lower.
    """
    gen = as_generator(rng)
    a = 1.0 / (exponent - 1.0)
    wu = (np.arange(n_users) + 1.0) ** -a
    wi = (np.arange(n_items) + 1.0) ** -a
    wu, wi = gen.permutation(wu / wu.sum()), gen.permutation(wi / wi.sum())
    u = gen.choice(n_users, size=n_edges, p=wu)
    i = gen.choice(n_items, size=n_edges, p=wi)
    ts = gen.integers(0, 10**9, size=n_edges) if with_timestamps else None
    R = InteractionMatrix.from_edges(u, i, n_users, n_items, ts)
    return R.prune_isolates()


def power_law_sample(theta: float, n: int, d_min: int = 1, rng=0, table_size: int = 100_000) -> np.ndarray:
    """Exact draws from P(d) proportional to d^-theta on d >= d_min.

    Inverse CDF through the Hurwitz zeta tail ratio, tabulated for d below
    d_min + table_size; the rare draws beyond the table use the rounded
    continuous inverse.
    """
    if theta <= 1:
        raise ValueError("theta must exceed 1")
    gen = as_generator(rng)
    u = gen.random(n)
    d = np.arange(d_min, d_min + table_size, dtype=float)
    ccdf = zeta(theta, d) / zeta(theta, d_min)  # P(D >= d), decreasing from 1
    # D = largest d with P(D >= d) > u
    idx = np.searchsorted(-ccdf, -u, side="left") - 1
    out = d[np.clip(idx, 0, table_size - 1)]
    tail = idx >= table_size - 1
    if tail.any():
        out[tail] = np.floor((d_min - 0.5) * (1 - u[tail]) ** (-1.0 / (theta - 1)) + 0.5)
    return out.astype(np.int64)
