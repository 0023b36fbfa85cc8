"""Contrastive losses over per-video sample groups, with analytic gradients.

Embeddings come as a ``(B, M, d)`` array: video ``i`` contributes ``M``
unit vectors. Slot 0 is the anchor, slot 1 its positive, slots ``2..M-1``
are intra-video negatives. Every slot of every other video is an
inter-video negative for anchor ``i``. With ``M == 4`` this is the
quadruple loss, with ``M == 2`` it is the warm-up (appearance) loss, and
intermediate ``M`` covers the component ablations.

All losses are sums over anchors. Gradients are with respect to the
embeddings as free variables; the normalization Jacobian belongs to the
caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError, NumericError, ShapeError

NORM_TOL = 1e-6


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.1
    alpha: float = 1.5
    beta: float = 0.01
    mining_enabled: bool = False

    def validate(self):
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.mining_enabled:
            if self.alpha < 1:
                raise ConfigError(f"alpha must be >= 1, got {self.alpha}")
            if not 0.0 <= self.beta <= 1.0:
                raise ConfigError(f"beta must be in [0, 1], got {self.beta}")
        return self


@dataclass(eq=False)
class LossReport:
    loss: float
    grads: np.ndarray  # same shape as the embedding batch
    similarities: np.ndarray  # (B, B*M) raw cosine similarity of each anchor to each flat slot
    per_anchor: np.ndarray  # (B,)
    topk_indices: list = field(default_factory=list)  # per anchor, flat slot indices of mined negatives


def num_hard_negatives(beta, num_inter):
    """``floor(beta * num_inter)``, but at least one when ``beta > 0`` and negatives exist."""
    if beta <= 0 or num_inter == 0:
        return 0
    # the small slack keeps products like 0.29 * 100 from flooring to 28
    k = math.floor(beta * num_inter + 1e-9)
    return min(max(k, 1), num_inter)


def _check_batch(z, slots=None, check_norm=True):
    z = np.asarray(z)
    if z.ndim != 3:
        raise ShapeError(f"expected (B, M, d) embeddings, got shape {z.shape}")
    if slots is not None and z.shape[1] != slots:
        raise ShapeError(f"expected {slots} slots per video, got {z.shape[1]}")
    if z.shape[0] < 1 or z.shape[1] < 2:
        raise ShapeError(f"need at least one video and two slots, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise NumericError("embeddings contain non-finite values")
    if not check_norm:
        return z
    norms = np.linalg.norm(z, axis=-1)
    if np.max(np.abs(norms - 1.0)) > NORM_TOL:
        raise InputError(
            f"embeddings must be unit norm (max deviation {np.max(np.abs(norms - 1.0)):.3g})")
    return z


def instance_loss(z, tau, alpha=1.0, beta=0.0, mine=False, check_norm=True):
    """Contrastive loss for a ``(B, M, d)`` group batch; see the module docstring."""
    z = _check_batch(z, check_norm=check_norm)
    B, M, d = z.shape
    flat = z.reshape(B * M, d)
    anchors = z[:, 0, :]
    sims = anchors @ flat.T
    logits = sims / tau

    rows = np.arange(B)
    own = rows[:, None] * M + np.arange(M)[None, :]  # flat indices of each video's slots
    weights = np.ones((B, B * M))
    weights[rows, own[:, 0]] = 0.0  # the anchor itself is not a candidate
    weights[rows[:, None], own[:, 2:]] = alpha

    topk = []
    if mine:
        k = num_hard_negatives(beta, M * (B - 1))
        inter_mask = np.ones((B, B * M), dtype=bool)
        inter_mask[rows[:, None], own] = False
        for i in range(B):
            cand = np.flatnonzero(inter_mask[i])
            # descending similarity, lower flat index first on ties
            order = cand[np.argsort(-sims[i, cand], kind="stable")]
            chosen = np.sort(order[:k])
            weights[i, chosen] = alpha
            topk.append(chosen)

    pos_idx = own[:, 1]
    shift = np.max(np.where(weights > 0, logits, -np.inf), axis=1, keepdims=True)
    terms = weights * np.exp(logits - shift)
    pos_term = terms[rows, pos_idx]
    neg_sum = terms.sum(axis=1, where=np.arange(B * M)[None, :] != pos_idx[:, None])
    denom = neg_sum + pos_term
    # when the positive holds the largest logit, log1p keeps precision for losses near zero
    pos_is_max = logits[rows, pos_idx] >= shift[:, 0]
    per_anchor = np.where(
        pos_is_max,
        np.log1p(neg_sum / np.where(pos_is_max, pos_term, 1.0)),
        np.log(denom) + shift[:, 0] - logits[rows, pos_idx],
    )
    loss = float(per_anchor.sum())
    if not np.isfinite(loss):
        raise NumericError(f"loss is not finite ({loss})")

    # d loss / d logit[i, c] = softmax weight - [c is positive]
    g = terms / denom[:, None]
    g[rows, pos_idx] -= 1.0
    g /= tau
    grads = np.zeros_like(flat)
    grads += g.T @ anchors
    grads = grads.reshape(B, M, d)
    grads[:, 0, :] += g @ flat
    return LossReport(loss=loss, grads=grads, similarities=sims,
                      per_anchor=per_anchor, topk_indices=topk)


def moquad_loss(z, cfg, check_norm=True):
    """Quadruple loss on a ``(B, 4, d)`` batch; mining follows ``cfg.mining_enabled``."""
    if cfg.mining_enabled:
        return moquad_loss_mined(z, cfg, check_norm=check_norm)
    _check_batch(z, slots=4, check_norm=False)
    cfg.validate()
    return instance_loss(z, cfg.tau, check_norm=check_norm)


def moquad_loss_mined(z, cfg, check_norm=True):
    _check_batch(z, slots=4, check_norm=False)
    cfg.validate()
    return instance_loss(z, cfg.tau, alpha=cfg.alpha, beta=cfg.beta, mine=True,
                         check_norm=check_norm)


def appearance_loss(z, tau, check_norm=True):
    """Warm-up loss on a ``(B, 2, d)`` batch of (dilation n, dilation m) clip pairs."""
    if isinstance(tau, LossConfig):
        tau = tau.tau
    _check_batch(z, slots=2, check_norm=False)
    return instance_loss(z, tau, check_norm=check_norm)


def loss_gradcheck(op, z, cfg, eps=1e-3):
    """Max coordinate-wise relative error of analytic gradients vs finite differences.

    Uses the five-point central stencil, whose O(eps**4) truncation error lets
    a large step keep rounding noise well below the gradient scale.
    ``op`` is one of the loss functions; it is called as
    ``op(z, cfg, check_norm=False)`` because perturbed points leave the sphere.
    """
    z = np.array(z, dtype=np.float64)
    analytic = op(z, cfg, check_norm=False).grads
    numeric = np.zeros_like(z)
    for idx in np.ndindex(*z.shape):
        orig = z[idx]
        f = []
        for h in (2 * eps, eps, -eps, -2 * eps):
            z[idx] = orig + h
            f.append(op(z, cfg, check_norm=False).loss)
        z[idx] = orig
        numeric[idx] = (-f[0] + 8 * f[1] - 8 * f[2] + f[3]) / (12 * eps)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / scale))
