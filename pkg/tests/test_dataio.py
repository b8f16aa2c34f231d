import json

import numpy as np
import pytest

from oracles import bfs_components
from polypvid.dataio import (
    AugmentPolicy,
    Dataset,
    PreprocessConfig,
    SyntheticSceneConfig,
    Video,
    augment_window,
    crop_canvas,
    generate_synthetic,
    load_dataset,
    preprocess,
    save_dataset,
    split_train_val,
    window_indices,
    window_sampler,
)
from polypvid.dataio.augment import GeometricDraw, apply_geometry, draw_geometry
from polypvid.errors import ConfigError, DataError, DegenerateCropError
from polypvid.heatmap_codec import encode_gaussian, extract_regions


def _frame(h=64, w=64, value=128):
    return np.full((h, w, 3), value, np.uint8)


def _video(vid, length=6, still=False, h=32, w=32):
    frames = np.stack([_frame(h, w, 10 * i + 50) for i in range(length)])
    masks = np.zeros((length, h, w), np.uint8)
    masks[:, 10:20, 8:16] = 1
    return Video(vid, frames, masks, is_still=still)


class TestCropCanvas:
    def test_uniform_border(self):
        f = _frame(64, 80)
        f[:10], f[-10:], f[:, :10], f[:, -10:] = 0, 0, 0, 0
        cf, cm = crop_canvas(f, np.zeros((64, 80), np.uint8), 20)
        assert cf.shape == (44, 60, 3) and cm.shape == (44, 60)

    def test_no_border(self):
        f = _frame()
        cf, _ = crop_canvas(f, np.zeros((64, 64), np.uint8), 20)
        assert cf.shape == f.shape

    def test_left_border_only_matches_scan(self):
        f = _frame(40, 100)
        f[:, :30] = 0
        m = np.zeros((40, 100), np.uint8)
        m[5, 40] = 1
        cf, cm = crop_canvas(f, m, 20)
        # oracle: leading columns whose mean is below threshold
        col_means = f.mean(axis=(0, 2))
        n_dark = next(i for i, v in enumerate(col_means) if v >= 20)
        assert n_dark == 30
        assert cf.shape == (40, 70, 3)
        assert cm[5, 10] == 1

    def test_fully_dark(self):
        with pytest.raises(DegenerateCropError):
            crop_canvas(np.zeros((8, 8, 3), np.uint8), np.zeros((8, 8), np.uint8), 20)


class TestPreprocess:
    def test_mean_frame_normalises_to_zero(self):
        cfg = PreprocessConfig(target_size=64)
        f = np.broadcast_to(np.asarray(cfg.mean, np.float32), (40, 50, 3)).copy()
        x, _ = preprocess(f, np.zeros((40, 50), np.uint8), cfg)
        np.testing.assert_allclose(x, 0.0, atol=1e-6)

    def test_574x500_to_512(self):
        cfg = PreprocessConfig()
        f = np.random.default_rng(0).integers(0, 255, (500, 574, 3), dtype=np.uint8)
        m = np.zeros((500, 574), np.uint8)
        m[100:300, 200:400] = 1
        x, mm = preprocess(f, m, cfg)
        assert x.shape == (512, 512, 3) and mm.shape == (512, 512)
        assert set(np.unique(mm)) == {0, 1}

    def test_standardisation(self):
        cfg = PreprocessConfig(target_size=64)
        x, _ = preprocess(np.full((64, 64, 3), 255, np.uint8), np.zeros((64, 64), np.uint8), cfg)
        want = (1.0 - np.asarray(cfg.mean)) / np.asarray(cfg.std)
        np.testing.assert_allclose(x[0, 0], want, rtol=1e-6)

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            PreprocessConfig(target_size=100)
        with pytest.raises(ConfigError):
            PreprocessConfig(std=(0.1, 0.0, 0.2))


class TestAugment:
    def _window(self, rng, n=3, size=48):
        frames = [rng.random((size, size, 3)).astype(np.float32) for _ in range(n)]
        masks = []
        for _ in range(n):
            m = np.zeros((size, size), np.uint8)
            m[10:22, 5:17] = 1
            masks.append(m)
        return frames, masks

    def test_identity_policy(self, rng):
        frames, masks = self._window(rng)
        f2, m2 = augment_window(frames, masks, AugmentPolicy.identity(), rng)
        for a, b in zip(frames, f2):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(masks, m2):
            np.testing.assert_array_equal(a, b)

    def test_hflip_applied_to_whole_window(self, rng):
        frames, masks = self._window(rng)
        policy = AugmentPolicy(p_rotate=0, p_hflip=1, p_vflip=0, p_zoom_in=0, p_zoom_out=0, p_color=0)
        f2, m2 = augment_window(frames, masks, policy, rng)
        w = masks[0].shape[1]
        for a, b, ma, mb in zip(frames, f2, masks, m2):
            np.testing.assert_array_equal(b, a[:, ::-1])
            xa = np.nonzero(ma)[1].mean()
            xb = np.nonzero(mb)[1].mean()
            # pixel-centre convention: reflection about (W - 1) / 2
            assert xb == pytest.approx(w - 1 - xa)

    def test_same_geometry_across_window(self, rng):
        frames, masks = self._window(rng, n=4)
        masks = [masks[0].copy() for _ in range(4)]
        policy = AugmentPolicy(p_rotate=1, p_zoom_out=0.9, p_zoom_in=0.1, p_color=1)
        for _ in range(10):
            _, m2 = augment_window(frames, masks, policy, rng)
            for m in m2[1:]:
                np.testing.assert_array_equal(m, m2[0])

    def test_masks_stay_binary(self, rng):
        frames, masks = self._window(rng)
        policy = AugmentPolicy(p_rotate=1, p_zoom_in=0.3, p_zoom_out=0.6, p_color=1)
        for _ in range(20):
            _, m2 = augment_window(frames, masks, policy, rng)
            for m in m2:
                assert set(np.unique(m)) <= {0, 1}

    def test_color_leaves_masks_untouched(self, rng):
        frames, masks = self._window(rng)
        policy = AugmentPolicy(p_rotate=0, p_hflip=0, p_vflip=0, p_zoom_in=0, p_zoom_out=0, p_color=1)
        f2, m2 = augment_window(frames, masks, policy, rng)
        assert any(not np.allclose(a, b) for a, b in zip(frames, f2))
        for a, b in zip(masks, m2):
            np.testing.assert_array_equal(a, b)

    def test_zoom_in_rarer_than_zoom_out(self):
        rng = np.random.default_rng(7)
        policy = AugmentPolicy()
        draws = [draw_geometry(policy, rng).zoom for _ in range(10_000)]
        n_in, n_out = draws.count("in"), draws.count("out")
        assert n_in < n_out
        scales = [d for d in (draw_geometry(policy, rng) for _ in range(2000))]
        assert all(0.5 <= d.scale <= 1.25 for d in scales)

    @pytest.mark.parametrize(
        "kw",
        [dict(zoom_in_max=0.3), dict(zoom_out_max=0.6), dict(p_zoom_in=0.5, p_zoom_out=0.4),
         dict(p_hflip=1.5)],
    )
    def test_policy_bounds(self, kw):
        with pytest.raises(ConfigError):
            AugmentPolicy(**kw)

    def test_geometry_moves_gaussian_centre_consistently(self):
        # rotate+zoom the mask; the decoded region centre follows the affine map
        m = np.zeros((64, 64), np.uint8)
        m[20:30, 36:46] = 1
        f = np.zeros((64, 64, 3), np.float32)
        draw = GeometricDraw(angle=30.0, scale=0.8, hflip=True)
        from polypvid.dataio.augment import affine_matrix

        _, m2 = apply_geometry(f, m, draw)
        (r0,) = extract_regions(m)
        (r1,) = extract_regions(m2)
        mat = affine_matrix(draw, 64, 64)
        cx, cy = mat @ np.array([r0.cx, r0.cy, 1.0])
        assert abs(r1.cx - cx) <= 1.0 and abs(r1.cy - cy) <= 1.0


class TestWindows:
    def test_still_replicates(self):
        v = _video("s", length=1, still=True)
        assert window_indices(v, 0, 2) == [0, 0, 0]

    def test_video_start_and_middle(self):
        v = _video("v", length=8)
        assert window_indices(v, 0, 2) == [0, 0, 0]
        assert window_indices(v, 1, 2) == [1, 0, 0]
        assert window_indices(v, 5, 2) == [5, 4, 3]

    def test_sampler_targets_and_boundaries(self):
        ds = Dataset([_video("a", 4), _video("b", 3)])
        pairs = list(window_sampler(ds, 2))
        assert len(pairs) == 7
        for window, target in pairs:
            cur = window[0]
            assert {s.video_id for s in window} == {cur.video_id}
            want = encode_gaussian(extract_regions(cur.mask), 32, 32)
            np.testing.assert_array_equal(target, want)
        assert [s.frame_index for s in pairs[4][0]] == [0, 0, 0]


class TestSplit:
    def test_twenty_videos(self):
        ds = Dataset([_video(f"v{i:02d}", 2) for i in range(20)])
        tr, va = split_train_val(ds, 0.85, seed=3)
        assert (len(tr), len(va)) == (17, 3)
        assert not set(tr.video_ids) & set(va.video_ids)
        assert sorted(tr.video_ids + va.video_ids) == ds.video_ids

    def test_seeded(self):
        ds = Dataset([_video(f"v{i:02d}", 2) for i in range(20)])
        assert split_train_val(ds, 0.85, 5)[1].video_ids == split_train_val(ds, 0.85, 5)[1].video_ids

    def test_errors(self):
        with pytest.raises(ConfigError):
            split_train_val(Dataset([_video("a")]), 0.85)
        with pytest.raises(ConfigError):
            split_train_val(Dataset([_video("a"), _video("b")]), 1.0)


class TestSynthetic:
    def test_one_blob_per_frame(self):
        cfg = SyntheticSceneConfig(n_videos=1, video_length=50, negative_fraction=0.0,
                                   flash_probability=0.3)
        (v,) = generate_synthetic(cfg, seed=2).videos
        assert len(v) == 50
        for m in v.masks:
            assert len(bfs_components(m)) == 1

    def test_seed_determinism(self):
        cfg = SyntheticSceneConfig(n_videos=3, video_length=10)
        a, b = generate_synthetic(cfg, 7), generate_synthetic(cfg, 7)
        for va, vb in zip(a, b):
            np.testing.assert_array_equal(va.frames, vb.frames)
            np.testing.assert_array_equal(va.masks, vb.masks)
            assert va.flash_frames == vb.flash_frames
        c = generate_synthetic(cfg, 8)
        assert not np.array_equal(a.videos[0].frames, c.videos[0].frames)

    def test_no_flash_means_smooth_change(self):
        cfg = SyntheticSceneConfig(n_videos=2, video_length=20, flash_probability=0.0,
                                   negative_fraction=0.5)
        ds = generate_synthetic(cfg, 1)
        for v in ds:
            assert v.flash_frames == ()
            if v.label == "negative":
                # only drift and sensor noise: no large local changes
                d = np.abs(np.diff(v.frames.astype(int), axis=0)).max(axis=-1)
                assert np.percentile(d, 99) < 60
                assert not v.masks.any()

    def test_flash_absent_from_masks(self):
        cfg = SyntheticSceneConfig(n_videos=4, video_length=30, flash_probability=0.5)
        ds = generate_synthetic(cfg, 3)
        for v in ds:
            assert len(v.flash_frames) > 0
            if v.label == "negative":
                assert not v.masks.any()

    def test_stills(self):
        ds = generate_synthetic(SyntheticSceneConfig(n_videos=1, n_stills=2, video_length=5), 0)
        stills = [v for v in ds if v.is_still]
        assert len(stills) == 2 and all(len(v) == 1 for v in stills)

    def test_flash_rate_binomial(self):
        cfg = SyntheticSceneConfig(n_videos=10, video_length=50, flash_probability=0.05,
                                   negative_fraction=1.0)
        n = sum(len(v.flash_frames) for v in generate_synthetic(cfg, 11))
        sd = np.sqrt(500 * 0.05 * 0.95)
        assert abs(n - 25) <= 3 * sd


class TestDiskLayout:
    def test_round_trip(self, tmp_path):
        cfg = SyntheticSceneConfig(n_videos=3, video_length=4, n_stills=1)
        ds = generate_synthetic(cfg, 5)
        save_dataset(ds, tmp_path)
        assert (tmp_path / "vid000" / "frames" / "000003.png").exists()
        assert (tmp_path / "still000" / "still.flag").exists()
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert [e["id"] for e in man["videos"]] == ds.video_ids
        back = load_dataset(tmp_path)
        for a, b in zip(ds, back):
            np.testing.assert_array_equal(a.frames, b.frames)
            np.testing.assert_array_equal(a.masks, b.masks)
            assert (a.is_still, a.label, a.flash_frames) == (b.is_still, b.label, b.flash_frames)

    def test_missing_mask(self, tmp_path):
        ds = generate_synthetic(SyntheticSceneConfig(n_videos=1, video_length=2), 0)
        save_dataset(ds, tmp_path)
        (tmp_path / "vid000" / "masks" / "000001.png").unlink()
        with pytest.raises(DataError):
            load_dataset(tmp_path)

    def test_without_manifest(self, tmp_path):
        ds = generate_synthetic(SyntheticSceneConfig(n_videos=2, video_length=2), 0)
        save_dataset(ds, tmp_path)
        (tmp_path / "manifest.json").unlink()
        assert load_dataset(tmp_path).video_ids == ["vid000", "vid001"]
