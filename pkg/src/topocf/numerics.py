"""Sparse products, randomized truncated SVD, Adam, RNG streams and feature transforms."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import torch

from .errors import NonFinite, NonFiniteGradient, NonPositiveValue, ZeroVariance
from .graph import NormalizedInteractionMatrix, ProjectedGraph

USER_ROWS, ITEM_ROWS = "user_rows", "item_rows"


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream keyed by ``(seed, stream)``.

    ``derive`` hashes extra identifiers into a new stream id, so per-sample or
    per-model streams never depend on how many draws a sibling made.
    """

    seed: int
    stream: int = 0

    def derive(self, *ids) -> "RngStream":
        h = hashlib.sha256(repr((self.stream,) + tuple(ids)).encode()).digest()
        return RngStream(self.seed, int.from_bytes(h[:8], "little"))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed & (2**64 - 1), spawn_key=(self.stream & (2**64 - 1),))
        return np.random.Generator(np.random.PCG64(ss))

    def torch_generator(self) -> torch.Generator:
        g = torch.Generator()
        g.manual_seed(int(self.generator().integers(0, 2**62)))
        return g


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _check_finite(a, what="result"):
    if not np.all(np.isfinite(a)):
        raise NonFinite(f"non-finite values in {what}")
    return a


def spmm(S, X, orientation: str = USER_ROWS, include_self: bool = False) -> np.ndarray:
    """Sparse times dense.

    For a normalized bipartite matrix, ``user_rows`` computes ``W @ X`` (X has
    one row per item) and ``item_rows`` computes ``W.T @ X``. A projected graph
    is square and symmetric, so orientation is ignored; its diagonal is added
    only when ``include_self``.
    """
    X = np.asarray(X, dtype=float)
    if isinstance(S, ProjectedGraph):
        M = S.counts
        if M.shape[1] != X.shape[0]:
            raise ValueError(f"dimension mismatch: {M.shape} @ {X.shape}")
        out = M @ X
        if include_self:
            out = out + S.self_counts[:, None] * X if X.ndim == 2 else out + S.self_counts * X
        return _check_finite(np.asarray(out))
    M = S.weights if isinstance(S, NormalizedInteractionMatrix) else sp.csr_matrix(S)
    if orientation == ITEM_ROWS:
        M = M.T
    elif orientation != USER_ROWS:
        raise ValueError(f"unknown orientation {orientation!r}")
    if M.shape[1] != X.shape[0]:
        raise ValueError(f"dimension mismatch: {M.shape} @ {X.shape}")
    return _check_finite(np.asarray(M @ X))


@dataclass(frozen=True, eq=False)
class SvdFactors:
    U: np.ndarray  # rows x K
    S: np.ndarray  # K, descending
    V: np.ndarray  # cols x K

    @property
    def rank(self) -> int:
        return self.S.size

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T


def _as_operator(S):
    if isinstance(S, NormalizedInteractionMatrix):
        return S.weights
    if sp.issparse(S):
        return sp.csr_matrix(S, dtype=float)
    return np.asarray(S, dtype=float)


def truncated_svd(S, K: int, oversample: int = 8, power_iters: int = 4, rng=None) -> SvdFactors:
    """Randomized top-K SVD: Gaussian sketch, QR-stabilized power iterations,
    then an exact SVD of the small projected matrix.

    Signs are fixed so the largest-magnitude entry of every right singular
    vector is positive.
    """
    A = _as_operator(S)
    m, n = A.shape
    if not 1 <= K <= min(m, n):
        raise ValueError(f"K={K} out of range [1, {min(m, n)}]")
    gen = as_generator(rng if rng is not None else RngStream(0))
    ell = min(K + max(0, oversample), min(m, n))
    Q, _ = np.linalg.qr(np.asarray(A @ gen.standard_normal((n, ell))))
    for _ in range(max(0, power_iters)):
        Z, _ = np.linalg.qr(np.asarray(A.T @ Q))
        Q, _ = np.linalg.qr(np.asarray(A @ Z))
    B = np.asarray((A.T @ Q).T)  # ell x n
    Ub, s, Vt = np.linalg.svd(B, full_matrices=False)
    U = Q @ Ub[:, :K]
    V = Vt[:K].T.copy()
    s = np.maximum(s[:K], 0.0)
    flip = np.sign(V[np.abs(V).argmax(axis=0), np.arange(K)])
    flip[flip == 0] = 1.0
    return SvdFactors(_check_finite(U * flip), s, _check_finite(V * flip))


# ------------------------------------------------------------------ Adam

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        zeros = [np.zeros_like(np.asarray(p, dtype=float)) for p in params]
        return cls(zeros, [z.copy() for z in zeros], 0)


def _adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    """One bias-corrected Adam update. Pure arithmetic, so it serves numpy and torch alike."""
    m = beta1 * m + (1 - beta1) * g
    v = beta2 * v + (1 - beta2) * g * g
    m_hat = m / (1 - beta1 ** t)
    v_hat = v / (1 - beta2 ** t)
    return p - lr * m_hat / (v_hat ** 0.5 + eps), m, v


def adam_step(params, grads, state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Functional Adam on numpy arrays; returns ``(new_params, new_state)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and state must have equal length")
    t = state.t + 1
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        p, g = np.asarray(p, dtype=float), np.asarray(g, dtype=float)
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("non-finite gradient")
        p2, m2, v2 = _adam_update(p, g, m, v, t, lr, beta1, beta2, eps)
        new_p.append(p2)
        new_m.append(m2)
        new_v.append(v2)
    return new_p, AdamState(new_m, new_v, t)


class Adam:
    """Adam over torch parameters using the same update as :func:`adam_step`.

    Parameters without a gradient in a step are treated as having zero gradient.
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = [p for p in params if p.requires_grad]
        self.lr, self.betas, self.eps = lr, betas, eps
        self.m = [torch.zeros_like(p) for p in self.params]
        self.v = [torch.zeros_like(p) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    @torch.no_grad()
    def step(self):
        for p in self.params:
            if p.grad is not None and not torch.isfinite(p.grad).all():
                raise NonFiniteGradient("non-finite gradient")
        self.t += 1
        b1, b2 = self.betas
        for k, p in enumerate(self.params):
            g = p.grad if p.grad is not None else torch.zeros_like(p)
            new, self.m[k], self.v[k] = _adam_update(p.detach(), g, self.m[k], self.v[k], self.t,
                                                     self.lr, b1, b2, self.eps)
            p.copy_(new)

    def state_dict(self):
        return {"t": self.t, "m": [x.clone() for x in self.m], "v": [x.clone() for x in self.v]}


# ------------------------------------------------------------------ transforms

def zscore(values) -> np.ndarray:
    """Standardize with the population standard deviation."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("zscore needs a vector of at least two values")
    _check_finite(x, "zscore input")
    mu = x.mean()
    sd = np.sqrt(np.mean((x - mu) ** 2))
    if sd <= 1e-12 * max(1.0, abs(mu)):
        raise ZeroVariance("constant input has zero variance")
    z = (x - mu) / sd
    # one polishing pass keeps mean/std within 1e-12 under cancellation
    z = z - z.mean()
    return z / np.sqrt(np.mean(z ** 2))


def log10_transform(values) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    _check_finite(x, "log10 input")
    if np.any(x <= 0):
        raise NonPositiveValue("log10 requires strictly positive values")
    return np.log10(x)
