"""Appearance and motion disturbances.

Appearance: a static noise image is blended into every frame of a clip,
``out[t] = (1 - lam) * clip[t] + lam * noise``. Because the noise is the same
for every frame, temporal differences are only scaled by ``1 - lam``. The
noise image is either tiled from k x k windows of donor frames (RAD, with
donors from another video or the same one) or a single frame of the clip's
own video (the BE baseline).

Motion: a second clip from the same video at a different playback speed
(speed), or with its frames reversed or shuffled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cliputil import Clip, area_resize, extract_clip, max_start, sample_clip_spec
from .errors import ConfigError, ShapeError

DONOR_MODES = ("inter", "intra", "be_baseline")
MOTION_KINDS = ("speed", "reverse", "shuffle")


@dataclass(frozen=True)
class RadConfig:
    k: int = 5
    lambda_range: tuple = (0.1, 0.5)
    donor_mode: str = "inter"

    def validate(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        lo, hi = self.lambda_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ConfigError(f"lambda_range must be a sub-interval of [0, 1], got {self.lambda_range}")
        if self.donor_mode not in DONOR_MODES:
            raise ConfigError(f"unknown donor_mode {self.donor_mode!r}")
        return self


@dataclass(eq=False)
class NoiseImage:
    pixels: np.ndarray  # (H, W, C) in [0, 1]
    donor_ids: list  # (video id, frame index) per window, row-major


def window_edges(n, k):
    """Split ``n`` pixels into ``k`` contiguous windows; the last one absorbs the remainder."""
    if n < k:
        raise ConfigError(f"cannot split {n} pixels into {k} windows")
    base = n // k
    edges = [i * base for i in range(k)] + [n]
    return np.array(edges)


def build_noise_image(target, donors, cfg, rng):
    """Noise image for ``target`` (a VideoRecord) drawn from the donor pool ``donors``.

    In ``inter`` mode one donor video other than the target is picked and each
    window gets an independently sampled frame of it; ``intra`` does the same
    with the target itself; ``be_baseline`` returns one whole target frame.
    """
    _, H, W, C = target.frames.shape
    if cfg.donor_mode == "be_baseline":
        t = int(rng.integers(target.T))
        return NoiseImage(pixels=target.frames[t].astype(np.float64) / 255.0,
                          donor_ids=[(target.id, t)])

    if cfg.donor_mode == "inter":
        pool = [v for v in donors if v.id != target.id]
        if not pool:
            raise ConfigError(f"no donor video other than {target.id} in the pool")
        donor = pool[int(rng.integers(len(pool)))]
    else:
        donor = target
    if donor.frames.shape[-1] != C:
        raise ShapeError(f"donor has {donor.frames.shape[-1]} channels, target has {C}")

    ye = window_edges(H, cfg.k)
    xe = window_edges(W, cfg.k)
    pixels = np.empty((H, W, C))
    ids = []
    for r in range(cfg.k):
        for c in range(cfg.k):
            t = int(rng.integers(donor.T))
            frame = donor.frames[t].astype(np.float64) / 255.0
            h, w = ye[r + 1] - ye[r], xe[c + 1] - xe[c]
            pixels[ye[r]:ye[r + 1], xe[c]:xe[c + 1]] = area_resize(frame, h, w)
            ids.append((donor.id, t))
    return NoiseImage(pixels=pixels, donor_ids=ids)


def apply_appearance_disturb(clip, noise, lam):
    if clip.pixels.shape[1:] != noise.pixels.shape:
        raise ShapeError(f"clip frames {clip.pixels.shape[1:]} vs noise {noise.pixels.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must be in [0, 1], got {lam}")
    out = (1.0 - lam) * clip.pixels + lam * noise.pixels
    np.clip(out, 0.0, 1.0, out=out)
    return Clip(pixels=out, source_id=clip.source_id, spec=clip.spec,
                frame_order=clip.frame_order, noise_weight=lam)


def sample_lambda(rng, cfg):
    lo, hi = cfg.lambda_range
    return float(rng.uniform(lo, hi))


def make_motion_disturbed_clip(video, anchor_spec, kind, dilation_candidates, rng):
    L, n = anchor_spec.length, anchor_spec.dilation
    if kind == "speed":
        alts = [m for m in dilation_candidates
                if m != n and max_start(video.T, L, m) >= 0]
        if not alts:
            raise ConfigError(
                f"no feasible dilation other than {n} among {list(dilation_candidates)}")
        m = alts[int(rng.integers(len(alts)))]
        return extract_clip(video, sample_clip_spec(rng, video.T, L, m))

    if kind not in MOTION_KINDS:
        raise ConfigError(f"unknown motion disturbance {kind!r}")
    clip = extract_clip(video, sample_clip_spec(rng, video.T, L, n))
    if kind == "reverse":
        order = np.arange(L)[::-1].copy()
    else:
        order = rng.permutation(L)
        while np.array_equal(order, np.arange(L)):
            order = rng.permutation(L)
    clip.pixels = clip.pixels[order]
    clip.frame_order = order
    return clip
