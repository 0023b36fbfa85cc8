"""Feed-forward clip encoder with hand-written backprop and momentum SGD.

Clips are area-downsampled to ``frame_size x frame_size``, flattened, and
passed through the feature extractor (ReLU MLP) and the projection head
(ReLU MLP with a linear output layer). The projection output is L2
normalized. Everything is float64.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cliputil import area_resize
from .errors import ConfigError, FormatError, ShapeError, UsageError

NORM_EPS = 1e-12
CKPT_MAGIC = b"MOQD"
CKPT_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    clip_length: int = 8
    frame_size: int = 16
    channels: int = 1
    hidden_dims: tuple = (256,)
    feature_dim: int = 128
    proj_dims: tuple = (128,)
    proj_out_dim: int = 64
    seed: int = 0

    @property
    def input_dim(self):
        return self.clip_length * self.frame_size * self.frame_size * self.channels

    def validate(self):
        dims = [self.clip_length, self.frame_size, self.channels, self.feature_dim,
                *self.hidden_dims, *self.proj_dims]
        if any(d <= 0 for d in dims):
            raise ConfigError(f"encoder dimensions must be positive: {self}")
        if self.proj_out_dim < 2:
            raise ConfigError("projection output dimension must be >= 2")
        return self

    def to_dict(self):
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        d["proj_dims"] = list(self.proj_dims)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["hidden_dims"] = tuple(d.get("hidden_dims", cls.hidden_dims))
        d["proj_dims"] = tuple(d.get("proj_dims", cls.proj_dims))
        return cls(**d)


@dataclass(frozen=True)
class OptimConfig:
    base_lr: float = 0.05
    momentum: float = 0.9
    total_steps: int = 1
    weight_decay: float = 0.0

    def validate(self):
        if not self.base_lr > 0:
            raise ConfigError("base_lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        return self


@dataclass(eq=False)
class ModelParams:
    weights: list  # (in, out) matrices, feature extractor layers first
    biases: list
    num_feature_layers: int
    velocity: list = field(default_factory=list)
    version: int = 0

    def arrays(self):
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def copy(self):
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                           self.num_feature_layers, [v.copy() for v in self.velocity],
                           self.version)

    def checksum(self):
        return float(sum(np.sum(a * (i + 1)) for i, a in enumerate(self.arrays())))


def init_params(cfg):
    cfg.validate()
    rng = np.random.default_rng([cfg.seed, 7])
    dims = [cfg.input_dim, *cfg.hidden_dims, cfg.feature_dim, *cfg.proj_dims, cfg.proj_out_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases, num_feature_layers=len(cfg.hidden_dims) + 1)


def clips_to_inputs(clips, cfg):
    """Stack clips into a ``(N, input_dim)`` design matrix."""
    rows = []
    for clip in clips:
        px = clip.pixels if hasattr(clip, "pixels") else np.asarray(clip)
        if px.ndim != 4 or px.shape[0] != cfg.clip_length or px.shape[-1] != cfg.channels:
            raise ShapeError(f"clip of shape {px.shape} does not match encoder config "
                             f"(length {cfg.clip_length}, channels {cfg.channels})")
        rows.append(area_resize(px, cfg.frame_size, cfg.frame_size).reshape(-1))
    return np.stack(rows)


def _forward_layers(params, x, upto=None):
    acts = [x]
    pre = []
    n = len(params.weights) if upto is None else upto
    h = x
    for li in range(n):
        z = h @ params.weights[li] + params.biases[li]
        pre.append(z)
        last = li == len(params.weights) - 1
        h = z if last else np.maximum(z, 0.0)
        acts.append(h)
    return acts, pre


def features(params, inputs):
    """Feature-extractor output (pre-projection) for a design matrix."""
    acts, _ = _forward_layers(params, inputs, upto=params.num_feature_layers)
    return acts[-1]


def embed(params, clips, cfg):
    """Unit-norm projections of ``clips`` plus the cache ``backward`` needs."""
    x = clips_to_inputs(clips, cfg)
    return embed_inputs(params, x)


def embed_inputs(params, x):
    acts, pre = _forward_layers(params, x)
    y = acts[-1]
    norm = np.sqrt(np.sum(y * y, axis=1, keepdims=True) + NORM_EPS)
    z = y / norm
    cache = {"acts": acts, "pre": pre, "norm": norm, "z": z, "version": params.version}
    return z, cache


def backward(params, cache, dz):
    """Parameter gradients of a scalar loss given ``dz = dloss/dz`` (shape ``(N, d)``)."""
    if cache["version"] != params.version:
        raise UsageError("forward cache is stale: parameters changed since the forward pass")
    z, norm = cache["z"], cache["norm"]
    dz = np.asarray(dz).reshape(z.shape)
    # z = y / sqrt(|y|^2 + eps)  =>  dy = (dz - z <z, dz>) / norm
    dy = (dz - z * np.sum(z * dz, axis=1, keepdims=True)) / norm
    acts, pre = cache["acts"], cache["pre"]
    gw = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    g = dy
    for li in range(len(params.weights) - 1, -1, -1):
        if li != len(params.weights) - 1:
            g = g * (pre[li] > 0)
        gw[li] = acts[li].T @ g
        gb[li] = g.sum(axis=0)
        if li:
            g = g @ params.weights[li].T
    return gw, gb


def cosine_lr(base_lr, step_index, total_steps):
    if not 0 <= step_index <= total_steps:
        raise IndexError(f"step {step_index} outside [0, {total_steps}]")
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step_index / total_steps))


def step(params, grads, optim, step_index):
    """One momentum-SGD update in place; returns the learning rate used."""
    gw, gb = grads
    lr = cosine_lr(optim.base_lr, step_index, optim.total_steps)
    if not params.velocity:
        params.velocity = [np.zeros_like(a) for a in params.arrays()]
    targets = params.arrays()
    for i, (p, g) in enumerate(zip(targets, [a for pair in zip(gw, gb) for a in pair])):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if optim.weight_decay and p.ndim == 2:
            g = g + optim.weight_decay * p
        v = params.velocity[i]
        v *= optim.momentum
        v += g
        p -= lr * v
    params.version += 1
    return lr


# -- checkpoint --------------------------------------------------------------
#
# "MOQD" | u32 version | u32 n | n bytes of encoder config JSON |
# u32 num_arrays | per array: u32 ndim, ndim x u32 dims, float64 data (LE)
# Arrays are W0, b0, W1, b1, ... in layer order.


def save_checkpoint(params, cfg, path):
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    parts = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(blob)), blob]
    arrays = params.arrays()
    parts.append(struct.pack("<I", len(arrays)))
    for a in arrays:
        parts.append(struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape))
        parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path):
    data = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError("truncated checkpoint", offset=pos)
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4) != CKPT_MAGIC:
        raise FormatError("bad checkpoint magic", offset=0)
    version, n = struct.unpack("<II", take(8))
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    cfg = EncoderConfig.from_dict(json.loads(take(n)))
    (count,) = struct.unpack("<I", take(4))
    arrays = []
    for _ in range(count):
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape)) * 8
        arrays.append(np.frombuffer(take(size), dtype="<f8").reshape(shape).astype(np.float64))
    if pos != len(data):
        raise FormatError("trailing bytes in checkpoint", offset=pos)
    params = ModelParams(arrays[0::2], arrays[1::2], num_feature_layers=len(cfg.hidden_dims) + 1)
    expected = init_params(cfg)
    if [a.shape for a in params.arrays()] != [a.shape for a in expected.arrays()]:
        raise FormatError("checkpoint arrays do not match its encoder config", offset=pos)
    return params, cfg
