"""Frozen-encoder evaluation: pooled video features, k-NN retrieval, linear probe."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cliputil import ClipSpec, extract_clip, max_start
from .encoder import clips_to_inputs, embed_inputs, features
from .errors import InputError


@dataclass(eq=False)
class VideoFeature:
    video_id: int
    vector: np.ndarray
    motion_class: int
    appearance_class: int


@dataclass
class RetrievalResult:
    top_k_accuracy: dict


@dataclass(frozen=True)
class ProbeConfig:
    lr: float = 0.5
    epochs: int = 500
    l2: float = 1e-4
    seed: int = 0


@dataclass(eq=False)
class ProbeResult:
    weights: np.ndarray
    bias: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    classes: np.ndarray
    train_acc: float
    test_acc: float | None
    test_pred: np.ndarray | None

    def predict(self, X):
        logits = ((np.asarray(X) - self.mean) / self.std) @ self.weights + self.bias
        return self.classes[np.argmax(logits, axis=1)]


def clip_offsets(T, length, dilation, num_clips):
    """Uniformly spaced start frames; short videos repeat offsets rather than fail."""
    hi = max_start(T, length, dilation)
    if hi < 0:
        raise IndexError(f"no {length}-frame window at dilation {dilation} fits in {T} frames")
    return np.round(np.linspace(0, hi, num_clips)).astype(int)


def pool_video_features(params, video, enc_cfg, num_clips=10, dilation=2, layer="backbone"):
    """Average the per-clip features over ``num_clips`` uniformly placed clips.

    ``layer="backbone"`` uses the feature extractor output; ``"projection"``
    uses the normalized projection-head output.
    """
    starts = clip_offsets(video.T, enc_cfg.clip_length, dilation, num_clips)
    clips = [extract_clip(video, ClipSpec(int(s), enc_cfg.clip_length, dilation)) for s in starts]
    x = clips_to_inputs(clips, enc_cfg)
    if layer == "backbone":
        f = features(params, x)
    elif layer == "projection":
        f, _ = embed_inputs(params, x)
    else:
        raise ValueError(f"unknown feature layer {layer!r}")
    return VideoFeature(video.id, f.mean(axis=0), video.motion_class, video.appearance_class)


def extract_features(params, videos, enc_cfg, num_clips=10, dilation=2, layer="backbone"):
    return [pool_video_features(params, v, enc_cfg, num_clips, dilation, layer) for v in videos]


def _unit_rows(X):
    X = np.asarray(X, dtype=np.float64)
    return X / np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1e-12)


def retrieve(query, gallery, ks=(1, 5, 10), label="motion_class"):
    """Top-k accuracy of cosine nearest-neighbour retrieval.

    A query is a hit at ``k`` when any of its ``k`` nearest gallery items
    shares its label.
    """
    if not gallery:
        raise InputError("empty gallery")
    if not query:
        raise InputError("no queries")
    Q = _unit_rows([f.vector for f in query])
    G = _unit_rows([f.vector for f in gallery])
    qy = np.array([getattr(f, label) for f in query])
    gy = np.array([getattr(f, label) for f in gallery])
    sims = Q @ G.T
    order = np.argsort(-sims, axis=1, kind="stable")
    hits = gy[order] == qy[:, None]
    acc = {}
    for k in ks:
        acc[k] = float(np.mean(np.any(hits[:, :min(k, len(gallery))], axis=1)))
    return RetrievalResult(acc)


def linear_probe(train_X, train_y, test_X=None, test_y=None, cfg=ProbeConfig()):
    """Multinomial logistic regression by full-batch gradient descent on standardized features."""
    X = np.asarray(train_X, dtype=np.float64)
    y = np.asarray(train_y)
    classes = np.unique(y)
    if classes.size < 2:
        raise InputError("linear probe needs at least two classes")
    mean = X.mean(axis=0)
    std = X.std(axis=0) + 1e-8
    Xs = (X - mean) / std
    Y = (y[:, None] == classes[None, :]).astype(np.float64)
    n, d = Xs.shape
    rng = np.random.default_rng(cfg.seed)
    W = rng.normal(0.0, 0.01, size=(d, classes.size))
    b = np.zeros(classes.size)
    for _ in range(cfg.epochs):
        logits = Xs @ W + b
        logits -= logits.max(axis=1, keepdims=True)
        P = np.exp(logits)
        P /= P.sum(axis=1, keepdims=True)
        G = (P - Y) / n
        W -= cfg.lr * (Xs.T @ G + cfg.l2 * W)
        b -= cfg.lr * G.sum(axis=0)
    result = ProbeResult(W, b, mean, std, classes, 0.0, None, None)
    result.train_acc = float(np.mean(result.predict(X) == y))
    if test_X is not None:
        result.test_pred = result.predict(test_X)
        result.test_acc = float(np.mean(result.test_pred == np.asarray(test_y)))
    return result


def per_category_report(y_true, y_pred, groups=None):
    """Accuracy per class. ``groups`` maps class -> group name (default ``"motion_only"``)."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    groups = groups or {}
    table = {}
    for c in np.unique(y_true):
        mask = y_true == c
        table[int(c)] = {
            "accuracy": float(np.mean(y_pred[mask] == c)),
            "count": int(mask.sum()),
            "group": groups.get(int(c), "motion_only"),
        }
    return table


def group_accuracy(table):
    """Count-weighted accuracy per group of a ``per_category_report`` table."""
    out = {}
    for row in table.values():
        hit, cnt = out.get(row["group"], (0.0, 0))
        out[row["group"]] = (hit + row["accuracy"] * row["count"], cnt + row["count"])
    return {g: hit / cnt for g, (hit, cnt) in out.items()}


def evaluate(params, enc_cfg, train_videos, test_videos, num_clips=10, dilation=2,
             layer="backbone", probe_cfg=ProbeConfig(), groups=None):
    """Retrieval + probe + per-class table in the results-JSON layout."""
    train_f = extract_features(params, train_videos, enc_cfg, num_clips, dilation, layer)
    test_f = extract_features(params, test_videos, enc_cfg, num_clips, dilation, layer)
    ret = retrieve(test_f, train_f)
    probe = linear_probe([f.vector for f in train_f], [f.motion_class for f in train_f],
                         [f.vector for f in test_f], [f.motion_class for f in test_f], probe_cfg)
    table = per_category_report([f.motion_class for f in test_f], probe.test_pred, groups)
    results = {
        "top1": ret.top_k_accuracy[1],
        "top5": ret.top_k_accuracy[5],
        "top10": ret.top_k_accuracy[10],
        "probe_train_acc": probe.train_acc,
        "probe_test_acc": probe.test_acc,
        "per_class": {str(c): row for c, row in table.items()},
    }
    return results, train_f, test_f
