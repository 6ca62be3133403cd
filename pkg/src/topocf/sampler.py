"""Sub-dataset generation by node or edge dropout."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .errors import EmptySample, RetryExhausted
from .graph import InteractionMatrix
from .numerics import RngStream, as_generator

log = logging.getLogger(__name__)

NODE_DROPOUT, EDGE_DROPOUT = "node_dropout", "edge_dropout"
STRATEGIES = (NODE_DROPOUT, EDGE_DROPOUT)
MAX_RETRIES = 100


def keep_count(n: int, mu: float) -> int:
    """floor(n * (1 - mu)), tolerant of binary rounding such as 100 * (1 - 0.8)."""
    return int(np.floor(n * (1.0 - mu) + 1e-9))


def node_dropout_masks(n_users: int, n_items: int, mu: float, rng):
    """Pick keep_count(U + I, mu) nodes uniformly from both sides jointly."""
    gen = as_generator(rng)
    n = n_users + n_items
    chosen = gen.permutation(n)[:keep_count(n, mu)]
    keep = np.zeros(n, dtype=bool)
    keep[chosen] = True
    return keep[:n_users], keep[n_users:]


def edge_dropout_mask(n_edges: int, mu: float, rng) -> np.ndarray:
    """Exactly keep_count(E, mu) edges, chosen uniformly without replacement."""
    gen = as_generator(rng)
    keep = np.zeros(n_edges, dtype=bool)
    keep[gen.permutation(n_edges)[:keep_count(n_edges, mu)]] = True
    return keep


def graph_sampling(G: InteractionMatrix, mu: float, strategy: str, rng) -> InteractionMatrix:
    """One sampled sub-graph; isolates are pruned under both strategies."""
    if not 0.0 <= mu < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {mu}")
    if strategy == NODE_DROPOUT:
        uk, ik = node_dropout_masks(G.n_users, G.n_items, mu, rng)
        eu, ei = G.edges()
        out = G.prune_isolates(uk[eu] & ik[ei])
    elif strategy == EDGE_DROPOUT:
        out = G.prune_isolates(edge_dropout_mask(G.n_edges, mu, rng))
    else:
        raise ValueError(f"unknown sampling strategy {strategy!r}")
    if out.is_empty():
        raise EmptySample(f"{strategy} with mu={mu:.4f} left no users or items")
    return out


@dataclass(frozen=True)
class SampleSpec:
    index: int
    mu: float
    strategy: str
    seed: int
    stream: int
    attempt: int = 0


@dataclass(frozen=True, eq=False)
class Sample:
    spec: SampleSpec
    graph: InteractionMatrix

    @property
    def name(self) -> str:
        return f"s{self.spec.index:05d}"


@dataclass(frozen=True, eq=False)
class SamplePool:
    source_hash: str
    mu_range: tuple
    samples: tuple

    @property
    def M(self) -> int:
        return len(self.samples)

    def manifest(self) -> list:
        return [dict(asdict(s.spec), name=s.name, content_hash=s.graph.content_hash(),
                     n_users=s.graph.n_users, n_items=s.graph.n_items, n_edges=s.graph.n_edges)
                for s in self.samples]

    def pool_hash(self) -> str:
        doc = {"source": self.source_hash, "mu_range": list(self.mu_range), "samples": self.manifest()}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def draw_spec(rng: RngStream, index: int, attempt: int, mu_range, strategies=STRATEGIES):
    """Spec for one sample attempt plus the generator positioned after the spec draws."""
    s = rng.derive("sample", index, attempt)
    gen = s.generator()
    lo, hi = mu_range
    mu = float(gen.uniform(lo, hi)) if hi > lo else float(lo)
    strategy = strategies[int(gen.integers(len(strategies)))]
    return SampleSpec(index, mu, strategy, rng.seed, s.stream, attempt), gen


def generate_one(G: InteractionMatrix, index: int, mu_range, rng: RngStream, strategies=STRATEGIES,
                 accept: Optional[Callable[[InteractionMatrix], bool]] = None,
                 max_retries: int = MAX_RETRIES) -> Sample:
    """Sample ``index`` of a pool; empty or rejected draws retry on a fresh stream."""
    for attempt in range(max_retries):
        spec, gen = draw_spec(rng, index, attempt, mu_range, strategies)
        try:
            g = graph_sampling(G, spec.mu, spec.strategy, gen)
        except EmptySample:
            continue
        if accept is not None and not accept(g):
            continue
        if attempt:
            log.info("sample %d accepted after %d retries", index, attempt)
        return Sample(spec, g)
    raise RetryExhausted(f"sample {index}: no acceptable sample in {max_retries} attempts")


def generate_samples(G: InteractionMatrix, M: int, mu_range=(0.7, 0.9), rng=None, strategies=STRATEGIES,
                     accept=None, max_retries: int = MAX_RETRIES) -> SamplePool:
    """M independent samples; sample m draws only from the stream derived from m,
    so the pool does not depend on generation order."""
    lo, hi = (float(x) for x in mu_range)
    if not 0.0 <= lo <= hi < 1.0:
        raise ValueError(f"mu range must satisfy 0 <= lo <= hi < 1, got {mu_range}")
    if M < 1:
        raise ValueError("M must be >= 1")
    rng = rng if isinstance(rng, RngStream) else RngStream(0 if rng is None else int(rng))
    samples = tuple(generate_one(G, m, (lo, hi), rng, strategies, accept, max_retries) for m in range(M))
    return SamplePool(G.content_hash(), (lo, hi), samples)
