import numpy as np
import pytest

from moquad.cliputil import extract_clip
from moquad.errors import InputError
from moquad.quadruple import (
    QuadConfig,
    build_appearance_batch,
    build_batch,
    build_quadruple,
)


def test_two_candidates_force_alternative(small_videos):
    cfg = QuadConfig(dilation_candidates=(1, 2))
    rng = np.random.default_rng(0)
    for _ in range(20):
        q = build_quadruple(small_videos[0], small_videos, cfg, rng)
        n = q.meta["dilations"]["anchor"]
        other = 2 if n == 1 else 1
        assert q.intra_neg.spec.dilation == other
        assert q.ad_intra_neg.spec.dilation == other


def test_quadruple_invariants(small_videos):
    cfg = QuadConfig()
    rng = np.random.default_rng(1)
    for v in small_videos:
        q = build_quadruple(v, small_videos, cfg, rng)
        clips = q.clips()
        assert len(clips) == 4
        assert {c.source_id for c in clips} == {v.id}
        n = q.anchor.spec.dilation
        assert q.ad_pos.spec.dilation == n
        assert q.intra_neg.spec.dilation != n and q.ad_intra_neg.spec.dilation != n
        assert q.meta["lambdas"]["anchor"] == 0.0 and q.meta["lambdas"]["intra_neg"] == 0.0
        assert 0.1 <= q.meta["lambdas"]["ad_pos"] <= 0.5
        assert 0.1 <= q.meta["lambdas"]["ad_intra_neg"] <= 0.5
        # the plain negative is made of exact source frames
        for px, t in zip(q.intra_neg.pixels, q.intra_neg.source_frames()):
            np.testing.assert_array_equal(px, v.frames[t] / 255.0)
        # the positive's temporal differences are those of its undisturbed window, scaled
        plain = extract_clip(v, q.ad_pos.spec)
        lam = q.meta["lambdas"]["ad_pos"]
        np.testing.assert_allclose(np.diff(q.ad_pos.pixels, axis=0),
                                   (1 - lam) * np.diff(plain.pixels, axis=0), rtol=0, atol=1e-15)
        assert all(vid != v.id for vid, _ in q.meta["donor_ids"]["ad_pos"])


def test_batch_counts(small_videos):
    batch = build_batch(small_videos[:4], small_videos, QuadConfig(), np.random.default_rng(2))
    assert len(batch) == 4
    clips = batch.clips()
    assert len(clips) == 16
    assert [c.source_id for c in clips] == [v.id for v in small_videos[:4] for _ in range(4)]


def test_batch_deterministic(small_videos):
    a = build_batch(small_videos[:3], small_videos, QuadConfig(), np.random.default_rng(7))
    b = build_batch(small_videos[:3], small_videos, QuadConfig(), np.random.default_rng(7))
    for x, y in zip(a.clips(), b.clips()):
        np.testing.assert_array_equal(x.pixels, y.pixels)


def test_single_video_batch(small_videos):
    batch = build_batch(small_videos[:1], small_videos, QuadConfig(), np.random.default_rng(0))
    assert len(batch) == 1 and batch.num_slots == 4


def test_duplicate_ids(small_videos):
    with pytest.raises(InputError):
        build_batch([small_videos[0], small_videos[0]], small_videos, QuadConfig(),
                    np.random.default_rng(0))


@pytest.mark.parametrize("flags,slots,intra", [
    ((False, False, False), 2, 0),
    ((True, False, False), 2, 0),
    ((True, True, False), 3, 1),
    ((True, True, True), 4, 2),
])
def test_ablation_widths(small_videos, flags, slots, intra):
    cfg = QuadConfig(enable_ad_pos=flags[0], enable_intra_neg=flags[1], enable_ad_intra_neg=flags[2])
    assert cfg.num_slots == slots and cfg.num_intra == intra
    q = build_quadruple(small_videos[0], small_videos, cfg, np.random.default_rng(0))
    assert len(q.clips()) == slots
    assert (q.meta["lambdas"]["ad_pos"] > 0) == flags[0]


@pytest.mark.parametrize("kind", ["reverse", "shuffle"])
def test_other_motion_kinds(small_videos, kind):
    q = build_quadruple(small_videos[0], small_videos, QuadConfig(motion_kind=kind),
                        np.random.default_rng(0))
    assert q.intra_neg.spec.dilation == q.anchor.spec.dilation
    assert q.intra_neg.frame_order is not None


def test_appearance_pairs(small_videos):
    clips = build_appearance_batch(small_videos[:4], QuadConfig(), np.random.default_rng(0))
    assert len(clips) == 8
    for a, b in zip(clips[0::2], clips[1::2]):
        assert a.source_id == b.source_id
        assert a.spec.dilation != b.spec.dilation
        assert a.noise_weight == 0 and b.noise_weight == 0
