"""Brute-force reference computations used by the test suite.

Nothing here imports the production arithmetic modules. Every loss term is
materialized one by one in plain Python floats and summed; top-K selection
sorts the full candidate list; ranks come from an explicit sort.
"""

import math

import numpy as np

LOSS_REL_TOL = 1e-12
GRAD_REL_TOL = 1e-6
END_TO_END_REL_TOL = 1e-4


def _dot(u, v):
    return math.fsum(float(a) * float(b) for a, b in zip(u, v))


def _hard_count(beta, n):
    if beta <= 0 or n == 0:
        return 0
    k = int(math.floor(beta * n + 1e-9))
    return min(max(k, 1), n)


def oracle_terms(z, tau, alpha=1.0, beta=0.0, mined=False):
    """Per anchor: (positive exponential, list of (weight, exponential, flat index, kind))."""
    B, M = len(z), len(z[0])
    out = []
    for i in range(B):
        a = z[i][0]
        pos = math.exp(_dot(a, z[i][1]) / tau)
        negs = []
        for s in range(2, M):
            negs.append([alpha if mined else 1.0, math.exp(_dot(a, z[i][s]) / tau), i * M + s, "intra"])
        inter = []
        for j in range(B):
            if j == i:
                continue
            for s in range(M):
                sim = _dot(a, z[j][s])
                inter.append([1.0, math.exp(sim / tau), j * M + s, "inter", sim])
        if mined:
            k = _hard_count(beta, len(inter))
            ranked = sorted(inter, key=lambda t: (-t[4], t[2]))
            for t in ranked[:k]:
                t[0] = alpha
                t[3] = "hard"
        negs.extend(t[:4] for t in inter)
        out.append((pos, negs))
    return out


def oracle_loss(z, tau, variant="moquad", alpha=1.0, beta=0.0):
    """Sum over anchors of -log(pos / (pos + weighted negatives)).

    ``variant`` is ``"moquad"`` (four slots), ``"appearance"`` (two slots) or
    ``"mined"`` (four slots with hard-negative weighting).
    """
    z = [[list(map(float, v)) for v in video] for video in np.asarray(z)]
    M = len(z[0])
    if variant in ("moquad", "mined") and M != 4:
        raise ValueError("quadruple variants need four slots")
    if variant == "appearance" and M != 2:
        raise ValueError("appearance variant needs two slots")
    total = []
    for pos, negs in oracle_terms(z, tau, alpha, beta, mined=(variant == "mined")):
        # -log(pos / (pos + negs)) written as log1p(negs / pos) to stay accurate near zero
        total.append(math.log1p(math.fsum(w * e for w, e, _, _ in negs) / pos))
    return math.fsum(total)


def oracle_topk(z, tau, beta):
    """Per anchor, sorted flat indices of the mined hard negatives."""
    z = [[list(map(float, v)) for v in video] for video in np.asarray(z)]
    return [sorted(idx for _, _, idx, kind in negs if kind == "hard")
            for _, negs in oracle_terms(z, tau, 2.0, beta, mined=True)]


def oracle_fd_grad(fn, point, eps=1e-5, order=2):
    """Central-difference gradient of scalar ``fn`` at ``point``.

    ``order=2`` is the three-point stencil, ``order=4`` the five-point one.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    x = np.array(point, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        vals = {}
        for m in ((1, -1) if order == 2 else (2, 1, -1, -2)):
            flat[i] = orig + m * eps
            vals[m] = fn(x)
        flat[i] = orig
        if order == 2:
            gflat[i] = (vals[1] - vals[-1]) / (2 * eps)
        else:
            gflat[i] = (-vals[2] + 8 * vals[1] - 8 * vals[-1] + vals[-2]) / (12 * eps)
    return grad


def max_rel_error(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / scale))


def oracle_ranks(sims, M):
    """Ranks of the positive and the intra negatives for each anchor.

    ``sims[i]`` lists the anchor's similarity to every flat slot (B * M
    entries, the anchor's own slot included and skipped). Candidates are
    sorted by similarity, descending, equal values by flat index.
    """
    pos_ranks, intra_ranks = [], []
    for i, row in enumerate(sims):
        cands = [(float(s), c) for c, s in enumerate(row) if c != i * M]
        cands.sort(key=lambda t: (-t[0], t[1]))
        rank_of = {c: r + 1 for r, (_, c) in enumerate(cands)}
        pos_ranks.append(rank_of[i * M + 1])
        intra_ranks.extend(rank_of[i * M + s] for s in range(2, M))
    return pos_ranks, intra_ranks
