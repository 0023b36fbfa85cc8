import numpy as np
import pytest

from moquad.cliputil import ClipSpec, extract_clip
from moquad.disturb import (
    NoiseImage,
    RadConfig,
    apply_appearance_disturb,
    build_noise_image,
    make_motion_disturbed_clip,
    window_edges,
)
from moquad.errors import ConfigError, ShapeError
from moquad.synthdata import DatasetConfig, generate_dataset

# float64 rounding of (1-l)*a + l*D over values in [0, 1]
BLEND_ATOL = 4 * np.finfo(np.float64).eps


class TestTiling:
    def test_divisible(self):
        e = window_edges(100, 5)
        assert list(np.diff(e)) == [20] * 5

    @pytest.mark.parametrize("n,sizes", [(32, [6, 6, 6, 6, 8]), (33, [6, 6, 6, 6, 9])])
    def test_remainder_goes_to_last(self, n, sizes):
        assert list(np.diff(window_edges(n, 5))) == sizes

    def test_too_small(self):
        with pytest.raises(ConfigError):
            window_edges(4, 5)

    @pytest.mark.parametrize("size", [32, 100, 33])
    def test_noise_windows_match_donor_frames(self, size):
        cfg = DatasetConfig(num_train=3, num_test=1, T=6, H=size, W=size, sprite_size=3)
        vids = generate_dataset(cfg)
        rng = np.random.default_rng(size)
        noise = build_noise_image(vids[0], vids, RadConfig(k=5), rng)
        assert noise.pixels.shape == (size, size, 1)
        assert len(noise.donor_ids) == 25
        edges = window_edges(size, 5)
        by_id = {v.id: v for v in vids}
        for w, (vid, t) in enumerate(noise.donor_ids):
            r, c = divmod(w, 5)
            block = noise.pixels[edges[r]:edges[r + 1], edges[c]:edges[c + 1]]
            frame = by_id[vid].frames[t].astype(float) / 255.0
            h, wd = block.shape[:2]
            # area averaging preserves the donor frame's mean intensity
            np.testing.assert_allclose(block.mean(), frame.mean(), rtol=1e-12)
            assert block.shape == (h, wd, 1)


class TestNoiseSources:
    def test_inter_excludes_target(self, small_videos):
        rng = np.random.default_rng(0)
        for target in small_videos[:4]:
            noise = build_noise_image(target, small_videos, RadConfig(donor_mode="inter"), rng)
            assert all(vid != target.id for vid, _ in noise.donor_ids)
            assert len({vid for vid, _ in noise.donor_ids}) == 1

    def test_intra_uses_target_only(self, small_videos):
        noise = build_noise_image(small_videos[2], small_videos, RadConfig(donor_mode="intra"),
                                  np.random.default_rng(0))
        assert {vid for vid, _ in noise.donor_ids} == {small_videos[2].id}

    def test_be_baseline_is_one_frame(self, small_videos):
        v = small_videos[1]
        noise = build_noise_image(v, small_videos, RadConfig(donor_mode="be_baseline"),
                                  np.random.default_rng(0))
        assert len(noise.donor_ids) == 1
        vid, t = noise.donor_ids[0]
        assert vid == v.id
        np.testing.assert_array_equal(noise.pixels, v.frames[t] / 255.0)

    def test_empty_pool(self, small_videos):
        with pytest.raises(ConfigError):
            build_noise_image(small_videos[0], [small_videos[0]], RadConfig(),
                              np.random.default_rng(0))


class TestBlend:
    @pytest.fixture
    def clip_and_noise(self, small_videos):
        clip = extract_clip(small_videos[0], ClipSpec(0, 8, 2))
        noise = build_noise_image(small_videos[0], small_videos, RadConfig(),
                                  np.random.default_rng(5))
        return clip, noise

    def test_identity(self, clip_and_noise):
        clip, noise = clip_and_noise
        np.testing.assert_array_equal(apply_appearance_disturb(clip, noise, 0.0).pixels, clip.pixels)

    def test_full_replacement(self, clip_and_noise):
        clip, noise = clip_and_noise
        out = apply_appearance_disturb(clip, noise, 1.0).pixels
        for frame in out:
            np.testing.assert_array_equal(frame, noise.pixels)

    def test_temporal_differences_scale(self, small_videos):
        rng = np.random.default_rng(11)
        for trial in range(100):
            v = small_videos[trial % len(small_videos)]
            clip = extract_clip(v, ClipSpec(int(rng.integers(4)), 8, int(rng.choice([1, 2, 4]))))
            noise = build_noise_image(v, small_videos, RadConfig(), rng)
            lam = float(rng.uniform(0, 1))
            out = apply_appearance_disturb(clip, noise, lam).pixels
            np.testing.assert_allclose(np.diff(out, axis=0), (1 - lam) * np.diff(clip.pixels, axis=0),
                                       rtol=0, atol=BLEND_ATOL)
            assert out.min() >= 0 and out.max() <= 1

    def test_motion_direction_preserved(self, small_videos):
        v = small_videos[0]
        clip = extract_clip(v, ClipSpec(0, 8, 1))
        noise = build_noise_image(v, small_videos, RadConfig(), np.random.default_rng(1))
        out = apply_appearance_disturb(clip, noise, 0.9).pixels
        for a, b in zip(np.diff(clip.pixels, axis=0), np.diff(out, axis=0)):
            assert np.argmax(a) == np.argmax(b) and np.argmin(a) == np.argmin(b)

    def test_shape_mismatch(self, clip_and_noise):
        clip, _ = clip_and_noise
        with pytest.raises(ShapeError):
            apply_appearance_disturb(clip, NoiseImage(np.zeros((5, 5, 1)), []), 0.3)


class TestMotionDisturb:
    def test_speed_excludes_anchor_dilation(self, small_videos):
        rng = np.random.default_rng(0)
        seen = set()
        for _ in range(50):
            clip = make_motion_disturbed_clip(small_videos[0], ClipSpec(0, 8, 1), "speed",
                                              (1, 2, 4), rng)
            seen.add(clip.spec.dilation)
        assert seen == {2, 4}

    def test_speed_frames_are_exact_source_frames(self, small_videos):
        rng = np.random.default_rng(1)
        for v in small_videos:
            clip = make_motion_disturbed_clip(v, ClipSpec(0, 8, 2), "speed", (1, 2, 4), rng)
            for px, t in zip(clip.pixels, clip.source_frames()):
                np.testing.assert_array_equal(px, v.frames[t] / 255.0)

    def test_no_alternative(self, small_videos):
        with pytest.raises(ConfigError):
            make_motion_disturbed_clip(small_videos[0], ClipSpec(0, 8, 2), "speed", (2,),
                                       np.random.default_rng(0))
        # dilation 8 cannot fit 8 frames into 32
        with pytest.raises(ConfigError):
            make_motion_disturbed_clip(small_videos[0], ClipSpec(0, 8, 2), "speed", (2, 8),
                                       np.random.default_rng(0))

    def test_reverse(self, small_videos):
        v = small_videos[0]
        clip = make_motion_disturbed_clip(v, ClipSpec(0, 8, 1), "reverse", (1, 2, 4),
                                          np.random.default_rng(0))
        idx = clip.spec.frame_indices()
        np.testing.assert_array_equal(clip.pixels, v.frames[idx[::-1]] / 255.0)

    def test_shuffle_fixture(self, small_videos):
        clip = make_motion_disturbed_clip(small_videos[0], ClipSpec(0, 8, 2), "shuffle",
                                          (1, 2, 4), np.random.default_rng(2024))
        # recorded from the reference run of numpy's Generator.permutation under this seed
        assert clip.frame_order.tolist() == [2, 5, 3, 0, 7, 4, 1, 6]
        assert clip.spec == ClipSpec(start=4, length=8, dilation=2)
        np.testing.assert_array_equal(clip.pixels,
                                      small_videos[0].frames[clip.source_frames()] / 255.0)

    def test_shuffle_never_identity(self, small_videos):
        rng = np.random.default_rng(3)
        for _ in range(200):
            clip = make_motion_disturbed_clip(small_videos[0], ClipSpec(0, 2, 1), "shuffle",
                                              (1,), rng)
            assert clip.frame_order.tolist() == [1, 0]
