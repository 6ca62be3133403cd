"""Loss functions used by the recommenders. All inputs are torch tensors; every
reduction is a mean over the batch unless stated otherwise."""

from __future__ import annotations

import itertools

import torch
import torch.nn.functional as F

from .errors import NonFinite


def _finite(*ts):
    for t in ts:
        if not torch.isfinite(t).all():
            raise NonFinite("non-finite loss input")


def bpr(pos_scores, neg_scores):
    """-ln sigmoid(s_ui - s_uj), mean over triples."""
    _finite(pos_scores, neg_scores)
    return -F.logsigmoid(pos_scores - neg_scores).mean()


def _unit_rows(x):
    norms = x.norm(dim=1, keepdim=True)
    if (norms == 0).any():
        raise ValueError("zero-norm row")
    return x / norms


def infonce(view_a, view_b, temperature: float = 0.2, exclude_positive: bool = False):
    """Cross-view InfoNCE over cosine similarity.

    Row k of ``view_a`` is pulled towards row k of ``view_b`` against all other
    rows of ``view_b``. The positive sits in the denominator unless
    ``exclude_positive`` (the literal sum over v != u).
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if view_a.shape[0] < 2:
        raise ValueError("InfoNCE needs at least two rows")
    _finite(view_a, view_b)
    logits = _unit_rows(view_a) @ _unit_rows(view_b).T / temperature
    pos = logits.diagonal()
    if exclude_positive:
        eye = torch.eye(logits.shape[0], dtype=torch.bool, device=logits.device)
        logits = logits.masked_fill(eye, float("-inf"))
    return (torch.logsumexp(logits, dim=1) - pos).mean()


def uniformity(x, pairs=None):
    """ln mean exp(-2 ||x_a/|x_a| - x_b/|x_b| ||^2) over ``pairs`` (default: all a < b)."""
    if x.shape[0] < 2:
        raise ValueError("uniformity needs at least two rows")
    _finite(x)
    z = _unit_rows(x)
    if pairs is None:
        a, b = torch.triu_indices(z.shape[0], z.shape[0], offset=1, device=z.device)
    else:
        a, b = pairs
    d2 = (z[a] - z[b]).pow(2).sum(dim=1)
    return torch.logsumexp(-2.0 * d2, dim=0) - torch.log(torch.tensor(float(d2.numel()), dtype=z.dtype))


def alignment_graphau(user_layers, item_layers, t2: float):
    """sum_l t2^l / 2 (|e_u^0 - e_i^l|^2 + |e_i^0 - e_u^l|^2), mean over (u, i) pairs.

    ``user_layers[l]`` / ``item_layers[l]`` hold layer-l rows of the paired
    users and items. 0^0 is taken as 1, so t2 = 0 keeps only the l = 0 term.
    """
    u0, i0 = user_layers[0], item_layers[0]
    total = torch.zeros(u0.shape[0], dtype=u0.dtype, device=u0.device)
    for l, (ul, il) in enumerate(zip(user_layers, item_layers)):
        w = 1.0 if l == 0 else float(t2) ** l
        if w == 0.0:
            continue
        total = total + w / 2 * ((u0 - il).pow(2).sum(1) + (i0 - ul).pow(2).sum(1))
    return total.mean()


def ultragcn_constraint(pos_scores, neg_scores, pos_weights, neg_weights):
    """-w+ ln sigmoid(s_ui) - w- ln sigmoid(-s_uj), mean over the batch."""
    _finite(pos_scores, neg_scores)
    return (-(pos_weights * F.logsigmoid(pos_scores)) - neg_weights * F.logsigmoid(-neg_scores)).mean()


def ultragcn_item(neighbor_scores, neighbor_weights, batch_size: int):
    """-sum_j w_ij ln sigmoid(s_uj) over item-item neighbors j of each positive, per batch row."""
    _finite(neighbor_scores)
    if neighbor_scores.numel() == 0:
        return neighbor_scores.sum() * 0.0
    return -(neighbor_weights * F.logsigmoid(neighbor_scores)).sum() / batch_size


def same_side_pairwise(anchor, positive, negative, literal_sign: bool = False):
    """Pairwise logistic loss on same-side co-occurrence triples.

    Standard form minimizes -ln sigmoid(<a,p> - <a,n>); ``literal_sign`` keeps
    the printed +ln sigmoid form.
    """
    _finite(anchor, positive, negative)
    if anchor.shape[0] == 0:
        return anchor.sum() * 0.0
    diff = (anchor * positive).sum(1) - (anchor * negative).sum(1)
    val = F.logsigmoid(diff).mean()
    return val if literal_sign else -val


def hinge(pos_scores, margin: float = 1.0):
    """max(0, margin - s_ui), mean over positives."""
    _finite(pos_scores)
    return torch.relu(margin - pos_scores).mean()


def _centered_distances(x):
    n = x.shape[0]
    sq = (x.unsqueeze(1) - x.unsqueeze(0)).pow(2).sum(-1)
    off = ~torch.eye(n, dtype=torch.bool, device=x.device)
    # sqrt only off the diagonal so the gradient stays finite at zero distance
    d = torch.where(off, torch.sqrt(torch.where(off, sq, torch.ones_like(sq))), torch.zeros_like(sq))
    return d - d.mean(0, keepdim=True) - d.mean(1, keepdim=True) + d.mean()


def distance_correlation(x, y):
    """Sample distance correlation (double-centered V-statistic); 0 for a constant input."""
    if x.shape[0] < 4:
        raise ValueError("distance correlation needs at least four rows")
    if x.dim() == 1:
        x = x.unsqueeze(1)
    if y.dim() == 1:
        y = y.unsqueeze(1)
    A, B = _centered_distances(x), _centered_distances(y)
    dcov = (A * B).mean()
    vx, vy = (A * A).mean(), (B * B).mean()
    denom = torch.sqrt(vx * vy)
    if denom.item() <= 0:
        return dcov * 0.0
    return torch.sqrt(torch.clamp(dcov / denom, min=0.0))


def independence(chunks):
    """Sum of pairwise distance correlations between intent chunks."""
    if len(chunks) < 2:
        raise ValueError("need at least two intents")
    total = chunks[0].sum() * 0.0
    for a, b in itertools.combinations(range(len(chunks)), 2):
        total = total + distance_correlation(chunks[a], chunks[b])
    return total


def l2_rows(*rows):
    """0.5 * sum of squared norms, averaged over the batch dimension."""
    n = rows[0].shape[0]
    return sum(r.pow(2).sum() for r in rows) / (2 * max(n, 1))
