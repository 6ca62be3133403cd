"""Independent brute-force references used to check the library."""

import itertools
import math
from collections import Counter

import networkx as nx
import numpy as np


def neighbor_sets(R, side):
    dense = R.dense() if side == "user" else R.dense().T
    return [set(np.nonzero(row)[0].tolist()) for row in dense]


def gini(x):
    x = [float(v) for v in x]
    n, s = len(x), sum(x)
    return sum(abs(a - b) for a, b in itertools.combinations(x, 2)) / (n * s)


def projection(R, side):
    """{(v, w): shared-neighbor count} for v != w, plus the diagonal counts."""
    N = neighbor_sets(R, side)
    off = {}
    for v, w in itertools.permutations(range(len(N)), 2):
        c = len(N[v] & N[w])
        if c:
            off[(v, w)] = c
    return off, [len(s) for s in N]


def projection_graph(R, side):
    off, _ = projection(R, side)
    g = nx.Graph()
    g.add_nodes_from(range(len(neighbor_sets(R, side))))
    g.add_edges_from(off)
    return g


def pair_clustering(R, side, v, w):
    N = neighbor_sets(R, side)
    union = N[v] | N[w]
    return len(N[v] & N[w]) / len(union) if union else 0.0


def node_clustering(R, side, v):
    N = neighbor_sets(R, side)
    others = [w for w in range(len(N)) if w != v and N[v] & N[w]]
    if not others:
        return 0.0
    return sum(pair_clustering(R, side, v, w) for w in others) / len(others)


def avg_clustering(R, side):
    n = len(neighbor_sets(R, side))
    return sum(node_clustering(R, side, v) for v in range(n)) / n


def assortativity(R, side):
    """networkx Pearson degree correlation on the projection; None if undefined."""
    g = projection_graph(R, side)
    if g.number_of_edges() == 0:
        return None
    degs = [d for _, d in g.degree() if d > 0]
    if len(set(degs)) < 2:
        return None
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r = nx.degree_pearson_correlation_coefficient(g)
    return None if r is None or math.isnan(r) else float(r)


def degree_distribution(R):
    degs = list(R.dense().sum(1).astype(int)) + list(R.dense().sum(0).astype(int))
    n = len(degs)
    return {d: c / n for d, c in Counter(degs).items()}


def kcore(R, k):
    """networkx k-core of the bipartite graph; (user labels kept, item labels kept)."""
    g = nx.Graph()
    eu, ei = R.edges()
    g.add_edges_from((("u", int(u)), ("i", int(i))) for u, i in zip(eu, ei))
    core = nx.k_core(g, k)
    users = sorted(n for s, n in core.nodes if s == "u")
    items = sorted(n for s, n in core.nodes if s == "i")
    edges = sorted((a[1], b[1]) if a[0] == "u" else (b[1], a[1]) for a, b in core.edges)
    return users, items, edges


def jacobi_svd(A, sweeps=60):
    """One-sided Jacobi SVD (Hestenes); returns U, s, V with s descending."""
    A = np.array(A, dtype=float)
    m, n = A.shape
    V = np.eye(n)
    U = A.copy()
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                a = U[:, p] @ U[:, p]
                b = U[:, q] @ U[:, q]
                c = U[:, p] @ U[:, q]
                if abs(c) < 1e-300:
                    continue
                off = max(off, abs(c) / math.sqrt(a * b) if a * b > 0 else 0.0)
                zeta = (b - a) / (2 * c)
                if abs(zeta) > 1e150:
                    t = 1 / (2 * zeta)
                else:
                    t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1 + zeta * zeta))
                cs = 1 / math.sqrt(1 + t * t)
                sn = cs * t
                Up, Uq = U[:, p].copy(), U[:, q].copy()
                U[:, p], U[:, q] = cs * Up - sn * Uq, sn * Up + cs * Uq
                Vp, Vq = V[:, p].copy(), V[:, q].copy()
                V[:, p], V[:, q] = cs * Vp - sn * Vq, sn * Vp + cs * Vq
        if off < 1e-15:
            break
    s = np.linalg.norm(U, axis=0)
    order = np.argsort(-s)
    s, U, V = s[order], U[:, order], V[:, order]
    U = U / np.where(s > 0, s, 1.0)
    return U, s, V


def finite_difference_check(f, x, eps=1e-6):
    """Max relative error between autograd and central differences for scalar f(x)."""
    import torch
    x = x.detach().clone().requires_grad_(True)
    f(x).backward()
    g = x.grad.detach().clone()
    num = torch.zeros_like(x)
    flat, nflat = x.detach().view(-1), num.view(-1)
    for k in range(flat.numel()):
        xp = x.detach().clone()
        xm = x.detach().clone()
        xp.view(-1)[k] += eps
        xm.view(-1)[k] -= eps
        nflat[k] = (f(xp) - f(xm)) / (2 * eps)
    scale = torch.maximum(g.abs().max(), num.abs().max()).clamp(min=1e-8)
    return float(((g - num).abs().max() / scale))


# ---------------------------------------------------------------- node-form propagation

def _leaky(x, slope=0.2):
    return np.where(x > 0, x, slope * x)


def node_form_layers(kind, R, E0, L, params=None, intents=4, rounds=2):
    """Layers [E^0..E^L] computed one node at a time from the neighbor-sum definition."""
    U, I = R.n_users, R.n_items
    nbrs = [set() for _ in range(U + I)]
    for u, i in zip(*R.edges()):
        nbrs[u].add(U + i)
        nbrs[U + i].add(u)
    deg = [len(n) for n in nbrs]
    if kind == "DGCF":
        return _dgcf_node_form(R, E0, L, intents, rounds)
    layers = [E0]
    for l in range(L):
        prev = layers[-1]
        nxt = np.zeros_like(prev)
        for v in range(U + I):
            agg = np.zeros(prev.shape[1])
            for w in nbrs[v]:
                agg += prev[w] / np.sqrt(deg[v] * deg[w])
            if kind == "NGCF":
                W1, W2, b = params["W_neigh"][l], params["W_inter"][l], params["bias"][l]
                nxt[v] = _leaky(agg @ W1 + (agg * prev[v]) @ W2 + b)
            elif kind == "LightGCL":
                nxt[v] = _leaky(agg) + prev[v]
            else:
                nxt[v] = agg
        layers.append(nxt)
    return layers


def _dgcf_node_form(R, E0, L, T, rounds):
    U = R.n_users
    edges = list(zip(*R.edges()))
    c = E0.shape[1] // T
    logits = {e: np.zeros(T) for e in edges}
    layers = [E0]
    for _ in range(L):
        Eu, Ei = layers[-1][:U], layers[-1][U:]
        for _ in range(rounds):
            P = {e: np.exp(z) / np.exp(z).sum() for e, z in logits.items()}
            du, di = {}, {}
            for (u, i), p in P.items():
                du[u] = du.get(u, 0) + p
                di[i] = di.get(i, 0) + p
            new_u, new_i = np.zeros_like(Eu), np.zeros_like(Ei)
            for (u, i), p in P.items():
                for t in range(T):
                    w = p[t] / np.sqrt(du[u][t] * di[i][t])
                    new_u[u, t * c:(t + 1) * c] += w * Ei[i, t * c:(t + 1) * c]
                    new_i[i, t * c:(t + 1) * c] += w * Eu[u, t * c:(t + 1) * c]
            for (u, i) in edges:
                logits[(u, i)] = logits[(u, i)] + np.array(
                    [np.tanh(new_u[u, t * c:(t + 1) * c]) @ Ei[i, t * c:(t + 1) * c] for t in range(T)])
        layers.append(np.vstack([new_u, new_i]))
    return layers
