"""Fixed-length clip extraction with a frame stride (playback speed) and pixel scaling."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class ClipSpec:
    start: int
    length: int
    dilation: int

    def frame_indices(self):
        return self.start + self.dilation * np.arange(self.length)

    @property
    def last_frame(self):
        return self.start + (self.length - 1) * self.dilation

    def check(self, T):
        if self.start < 0:
            raise IndexError(f"clip start {self.start} is negative")
        if self.length < 2:
            raise ConfigError(f"clip length must be >= 2, got {self.length}")
        if self.dilation < 1:
            raise ConfigError(f"dilation must be >= 1, got {self.dilation}")
        if self.last_frame >= T:
            raise IndexError(
                f"clip needs frame {self.last_frame} but the video has {T} frames "
                f"(start={self.start}, length={self.length}, dilation={self.dilation})")


@dataclass(eq=False)
class Clip:
    pixels: np.ndarray  # float64 (L, H, W, C) in [0, 1]
    source_id: int
    spec: ClipSpec
    # permutation applied to the spec's frames (reverse/shuffle disturbances); None = natural order
    frame_order: np.ndarray | None = None
    noise_weight: float = 0.0

    def source_frames(self):
        idx = self.spec.frame_indices()
        return idx if self.frame_order is None else idx[self.frame_order]


def extract_clip(video, spec):
    spec.check(video.T)
    pixels = video.frames[spec.frame_indices()].astype(np.float64) / 255.0
    return Clip(pixels=pixels, source_id=video.id, spec=spec)


def max_start(T, length, dilation):
    return T - 1 - (length - 1) * dilation


def sample_clip_spec(rng, video_T, length, dilation):
    """Uniform random temporal window of ``length`` frames at stride ``dilation``."""
    hi = max_start(video_T, length, dilation)
    if hi < 0:
        raise IndexError(
            f"no window of {length} frames at dilation {dilation} fits in {video_T} frames")
    return ClipSpec(start=int(rng.integers(hi + 1)), length=length, dilation=dilation)


@lru_cache(maxsize=256)
def _area_matrix(n_in, n_out):
    # row o averages the input interval [o * n_in / n_out, (o + 1) * n_in / n_out)
    edges = np.arange(n_out + 1) * (n_in / n_out)
    m = np.zeros((n_out, n_in))
    for o in range(n_out):
        lo, hi = edges[o], edges[o + 1]
        for i in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_in)):
            m[o, i] = min(hi, i + 1) - max(lo, i)
    m /= m.sum(axis=1, keepdims=True)
    m.setflags(write=False)
    return m


def area_resize(image, out_h, out_w):
    """Area-average resample of ``(..., H, W, C)`` to ``(..., out_h, out_w, C)``."""
    if image.ndim < 3:
        raise ShapeError(f"expected (..., H, W, C), got shape {image.shape}")
    H, W = image.shape[-3], image.shape[-2]
    if (H, W) == (out_h, out_w):
        return np.array(image, dtype=np.float64)
    my = _area_matrix(H, out_h)
    mx = _area_matrix(W, out_w)
    out = np.einsum("oh,...hwc->...owc", my, image)
    return np.einsum("pw,...owc->...opc", mx, out)
