"""Per-video quadruple construction and batching.

Slot layout of a built sample (always in this order, disabled members dropped):

    0  anchor        plain clip at dilation n
    1  positive      independent window at dilation n, appearance-disturbed
                     unless ``enable_ad_pos`` is off
    2  intra_neg     motion-disturbed clip (dilation m != n for speed)
    3  ad_intra_neg  independently motion-disturbed clip with its own noise image
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cliputil import extract_clip, max_start, sample_clip_spec
from .disturb import (
    RadConfig,
    apply_appearance_disturb,
    build_noise_image,
    make_motion_disturbed_clip,
    sample_lambda,
)
from .errors import ConfigError, InputError


@dataclass(frozen=True)
class QuadConfig:
    clip_length: int = 8
    dilation_candidates: tuple = (1, 2, 4)
    rad: RadConfig = field(default_factory=RadConfig)
    motion_kind: str = "speed"
    enable_ad_pos: bool = True
    enable_intra_neg: bool = True
    enable_ad_intra_neg: bool = True

    @property
    def num_slots(self):
        return 2 + int(self.enable_intra_neg) + int(self.enable_ad_intra_neg)

    @property
    def num_intra(self):
        return self.num_slots - 2


@dataclass(eq=False)
class Quadruple:
    anchor: object
    ad_pos: object
    intra_neg: object = None
    ad_intra_neg: object = None
    meta: dict = field(default_factory=dict)

    def clips(self):
        return [c for c in (self.anchor, self.ad_pos, self.intra_neg, self.ad_intra_neg)
                if c is not None]

    @property
    def video_id(self):
        return self.anchor.source_id


@dataclass(eq=False)
class QuadBatch:
    quads: list

    def __len__(self):
        return len(self.quads)

    def clips(self):
        """All clips, video-major, slot-minor."""
        return [c for q in self.quads for c in q.clips()]

    @property
    def num_slots(self):
        return len(self.quads[0].clips())


def _anchor_dilation(video, cfg, rng, need_alternative):
    feasible = [n for n in cfg.dilation_candidates
                if max_start(video.T, cfg.clip_length, n) >= 0]
    if need_alternative:
        feasible = [n for n in feasible if any(m != n for m in feasible)]
    if not feasible:
        raise ConfigError(
            f"no feasible dilation in {list(cfg.dilation_candidates)} for a "
            f"{cfg.clip_length}-frame clip of a {video.T}-frame video")
    return feasible[int(rng.integers(len(feasible)))]


def build_quadruple(video, donors, cfg, rng):
    has_neg = cfg.enable_intra_neg or cfg.enable_ad_intra_neg
    n = _anchor_dilation(video, cfg, rng, need_alternative=has_neg and cfg.motion_kind == "speed")
    L = cfg.clip_length
    meta = {"video_id": video.id, "dilations": {}, "lambdas": {}, "donor_ids": {}}

    anchor = extract_clip(video, sample_clip_spec(rng, video.T, L, n))
    pos = extract_clip(video, sample_clip_spec(rng, video.T, L, n))
    meta["dilations"]["anchor"] = n
    meta["lambdas"]["anchor"] = 0.0
    meta["dilations"]["ad_pos"] = n
    if cfg.enable_ad_pos:
        noise = build_noise_image(video, donors, cfg.rad, rng)
        lam = sample_lambda(rng, cfg.rad)
        pos = apply_appearance_disturb(pos, noise, lam)
        meta["donor_ids"]["ad_pos"] = noise.donor_ids
    meta["lambdas"]["ad_pos"] = pos.noise_weight

    intra = ad_intra = None
    if cfg.enable_intra_neg:
        intra = make_motion_disturbed_clip(video, anchor.spec, cfg.motion_kind,
                                           cfg.dilation_candidates, rng)
        meta["dilations"]["intra_neg"] = intra.spec.dilation
        meta["lambdas"]["intra_neg"] = 0.0
    if cfg.enable_ad_intra_neg:
        ad_intra = make_motion_disturbed_clip(video, anchor.spec, cfg.motion_kind,
                                              cfg.dilation_candidates, rng)
        noise = build_noise_image(video, donors, cfg.rad, rng)
        lam = sample_lambda(rng, cfg.rad)
        ad_intra = apply_appearance_disturb(ad_intra, noise, lam)
        meta["dilations"]["ad_intra_neg"] = ad_intra.spec.dilation
        meta["lambdas"]["ad_intra_neg"] = lam
        meta["donor_ids"]["ad_intra_neg"] = noise.donor_ids
    return Quadruple(anchor=anchor, ad_pos=pos, intra_neg=intra, ad_intra_neg=ad_intra, meta=meta)


def _check_distinct(videos):
    ids = [v.id for v in videos]
    if len(set(ids)) != len(ids):
        raise InputError(f"batch contains duplicate video ids: {ids}")
    if not ids:
        raise InputError("empty batch")


def _video_rngs(videos, rng):
    seeds = rng.integers(2**63, size=len(videos))
    return [np.random.default_rng([int(s), v.id]) for s, v in zip(seeds, videos)]


def build_batch(videos, donors, cfg, rng):
    _check_distinct(videos)
    return QuadBatch([build_quadruple(v, donors, cfg, r)
                      for v, r in zip(videos, _video_rngs(videos, rng))])


def build_appearance_pair(video, cfg, rng):
    """Two plain clips of one video at different dilations (warm-up task)."""
    L = cfg.clip_length
    n = _anchor_dilation(video, cfg, rng, need_alternative=True)
    first = extract_clip(video, sample_clip_spec(rng, video.T, L, n))
    second = make_motion_disturbed_clip(video, first.spec, "speed", cfg.dilation_candidates, rng)
    return first, second


def build_appearance_batch(videos, cfg, rng):
    _check_distinct(videos)
    pairs = [build_appearance_pair(v, cfg, r) for v, r in zip(videos, _video_rngs(videos, rng))]
    return [c for pair in pairs for c in pair]
