import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pose3d.datapipe import (
    RawClip,
    center_pelvis,
    crop_square,
    decimated_indices,
    decimation_stride,
    gcn,
    preprocess_stream,
    resize_bilinear,
    sample_windows,
)
from pose3d.errors import DataError
from pose3d.rng import RngState


def bilinear_oracle(image: np.ndarray, target: int) -> np.ndarray:
    """Direct per-pixel interpolation with the half-pixel convention,
    written independently of the vectorized implementation."""
    s = image.shape[0]
    out = np.zeros((target, target) + image.shape[2:])
    for oy in range(target):
        for ox in range(target):
            sy = min(max((oy + 0.5) * s / target - 0.5, 0.0), s - 1)
            sx = min(max((ox + 0.5) * s / target - 0.5, 0.0), s - 1)
            y0, x0 = int(np.floor(sy)), int(np.floor(sx))
            y1, x1 = min(y0 + 1, s - 1), min(x0 + 1, s - 1)
            fy, fx = sy - y0, sx - x0
            out[oy, ox] = ((1 - fy) * ((1 - fx) * image[y0, x0] + fx * image[y0, x1])
                           + fy * ((1 - fx) * image[y1, x0] + fx * image[y1, x1]))
    return out


def solid_frame(h, w, value=100):
    return np.full((h, w, 3), value, dtype=np.uint8)


class TestCropSquare:
    def test_already_square_centered(self):
        frame = np.zeros((300, 300, 3), dtype=np.uint8)
        frame[100:200, 100:200] = 77
        out = crop_square(frame, (100, 100, 100, 100))
        assert out.shape == (100, 100, 3)
        assert (out == 77).all()

    def test_symmetric_horizontal_extension(self):
        frame = np.zeros((200, 300, 3), dtype=np.uint8)
        frame[:, :, 0] = np.arange(300, dtype=np.uint8)[None, :]
        out = crop_square(frame, (120, 40, 60, 100))
        assert out.shape == (100, 100, 3)
        # 20 px added on each side: columns now span 100..199
        assert out[0, 0, 0] == 100
        assert out[0, -1, 0] == 199

    def test_extension_beyond_border_zero_filled(self):
        # hand-built 8x8 image, box flush against the left edge
        frame = np.zeros((8, 8, 3), dtype=np.uint8)
        frame[:, :, 1] = (10 * np.arange(8, dtype=np.uint16))[None, :].astype(np.uint8)
        out = crop_square(frame, (0, 2, 2, 4))  # w=2, h=4 -> side 4, 1 px out left
        assert out.shape == (4, 4, 3)
        assert (out[:, 0] == 0).all()                 # zero-filled margin
        assert (out[:, 1, 1] == 0).all()              # source column 0
        assert (out[:, 2, 1] == 10).all()             # source column 1
        assert (out[:, 3, 1] == 20).all()             # source column 2

    def test_zero_area_box(self):
        with pytest.raises(DataError):
            crop_square(solid_frame(10, 10), (0, 0, 0, 5))


class TestResizeBilinear:
    def test_identity_same_size(self):
        img = np.random.default_rng(0).uniform(0, 255, (128, 128, 3))
        out = resize_bilinear(img, 128)
        assert np.array_equal(out, img)

    def test_constant_upscale(self):
        out = resize_bilinear(np.full((2, 2, 3), 9.0), 128)
        assert out.shape == (128, 128, 3)
        assert np.allclose(out, 9.0, atol=1e-12)

    def test_gradient_matches_per_pixel_oracle(self):
        rng = np.random.default_rng(1)
        img = rng.uniform(0, 1, (4, 4, 3))
        got = resize_bilinear(img, 128)
        want = bilinear_oracle(img, 128)
        assert np.abs(got - want).max() < 1e-10

    def test_downscale_matches_oracle(self):
        rng = np.random.default_rng(2)
        img = rng.uniform(0, 255, (9, 9))
        assert np.abs(resize_bilinear(img, 4) - bilinear_oracle(img, 4)).max() < 1e-10


class TestGcn:
    def test_constant_channel_is_zeroed(self):
        out = gcn(np.full((3, 5, 8, 8), 42.0))
        assert not out.any()

    def test_two_point_distribution(self):
        stack = np.zeros((3, 5, 2, 2))
        stack[:, :, 0, :] = 0.0
        stack[:, :, 1, :] = 2.0
        out = gcn(stack)
        assert np.allclose(np.unique(out), [-1.0, 1.0])

    def test_normalized_moments(self):
        rng = np.random.default_rng(3)
        out = gcn(rng.uniform(0, 255, (3, 5, 16, 16)))
        for c in range(3):
            assert abs(out[c].mean()) < 1e-6
            assert abs(out[c].std() - 1.0) < 1e-6


class TestCenterPelvis:
    def test_zero_pelvis_everywhere(self, np_rng):
        j = np_rng.standard_normal((5, 17, 3))
        out = center_pelvis(j)
        assert not out[:, 0, :].any()

    def test_known_offset(self):
        j = np.zeros((1, 17, 3))
        j[0, 0] = [1.0, 1.0, 1.0]
        j[0, 5] = [4.0, 5.0, 1.0]
        out = center_pelvis(j)
        assert out[0, 5].tolist() == [3.0, 4.0, 0.0]

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_idempotent_and_translation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        j = rng.standard_normal((3, 17, 3))
        once = center_pelvis(j)
        assert np.array_equal(center_pelvis(once), once)
        shifted = center_pelvis(j + rng.standard_normal(3))
        assert np.allclose(shifted, once, atol=1e-12)


def make_raw_clip(n_frames, h=32, w=32, fps=50.0, clip_id="c0"):
    rng = np.random.default_rng(99)
    frames = rng.integers(0, 255, (n_frames, h, w, 3), dtype=np.uint8)
    boxes = np.tile([4, 4, 20, 24], (n_frames, 1))
    joints = rng.standard_normal((n_frames, 17, 3)) * 100.0
    return RawClip(clip_id=clip_id, frames=frames, boxes=boxes, joints=joints, fps=fps)


class TestSampleWindows:
    def test_stride_for_50hz_to_13hz(self):
        assert decimation_stride(50.0, 13.0) == 4

    def test_seventeen_frames_one_window(self):
        clip = make_raw_clip(17)
        assert decimated_indices(17, 50.0) == [0, 4, 8, 12, 16]
        samples = sample_windows(clip, resize_to=16)
        assert len(samples) == 1
        assert samples[0].frame_indices == (0, 4, 8, 12, 16)

    def test_same_seed_same_starts(self):
        clip = make_raw_clip(120)
        a = sample_windows(clip, rng=RngState(5), max_windows=4, resize_to=16)
        b = sample_windows(clip, rng=RngState(5), max_windows=4, resize_to=16)
        assert [s.frame_indices for s in a] == [s.frame_indices for s in b]

    def test_requested_windows_distinct_and_pelvis_zero(self):
        clip = make_raw_clip(1000)
        samples = sample_windows(clip, rng=RngState(1), max_windows=10, resize_to=16)
        assert len(samples) == 10
        starts = [s.frame_indices[0] for s in samples]
        assert len(set(starts)) == 10
        assert starts == sorted(starts)
        for s in samples:
            assert not s.target.numpy()[:, 0, :].any()

    def test_window_indices_ordered_no_overlap_inside(self):
        clip = make_raw_clip(200)
        for s in sample_windows(clip, rng=RngState(2), max_windows=5, resize_to=16):
            idx = list(s.frame_indices)
            assert idx == sorted(idx)
            assert len(set(idx)) == len(idx)

    def test_too_short_clip_yields_empty(self, caplog):
        clip = make_raw_clip(3)
        assert sample_windows(clip, resize_to=16) == []

    def test_sample_tensor_contract(self):
        clip = make_raw_clip(40)
        s = sample_windows(clip, rng=RngState(0), max_windows=1, resize_to=16)[0]
        assert s.video.shape == (3, 5, 16, 16)
        assert s.target.shape == (5, 17, 3)
        v = s.video.numpy()
        for c in range(3):
            assert abs(v[c].mean()) < 1e-6
            assert abs(v[c].std() - 1.0) < 1e-6

    def test_float32_pipeline(self):
        clip = make_raw_clip(40)
        s = sample_windows(clip, rng=RngState(0), max_windows=1, resize_to=16,
                           dtype=np.float32)[0]
        assert s.video.dtype == np.float32


class TestPreprocessStream:
    def test_shapes_and_indices(self):
        clip = make_raw_clip(40)
        frames, dec = preprocess_stream(clip, resize_to=16)
        assert frames.shape == (10, 16, 16, 3)
        assert dec == list(range(0, 40, 4))
