"""Preprocessing chain from raw video clips to network-ready samples.

Per frame: crop to the bounding box, extend the crop symmetrically along its
shorter side to a square (zero-filled where it leaves the image), and resize
bilinearly to the network input resolution. Per 5-frame window: stack frames
channel-first, normalize contrast per colour channel over the whole stack,
and pair with pelvis-centered joint targets.

Temporal decimation approximates the target frame rate with a uniform integer
stride (round(source_fps / target_hz)); from 50 fps sources and the default
13 Hz target that is stride 4, i.e. an effective 12.5 Hz.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError
from .rng import RngState
from .tensor import Tensor

logger = logging.getLogger(__name__)

GCN_EPS = 1e-8
DEFAULT_TARGET_HZ = 13.0
WINDOW = 5


@dataclass
class RawClip:
    """A source clip: frames plus per-frame boxes and ground-truth joints.

    frames: uint8 [n, H, W, 3]; boxes: int [n, 4] as (x, y, w, h);
    joints: float64 [n, 17, 3] in mm (camera frame).
    """

    clip_id: str
    frames: np.ndarray
    boxes: np.ndarray
    joints: np.ndarray
    fps: float = 50.0
    action: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.frames)
        if len(self.boxes) != n or len(self.joints) != n:
            raise DataError(
                f"clip {self.clip_id}: frames ({n}), boxes ({len(self.boxes)}) and "
                f"joints ({len(self.joints)}) counts differ")

    @property
    def n_frames(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class ClipSample:
    """One preprocessed training sample.

    video: [3, 5, S, S] contrast-normalized; target: [5, 17, 3] mm,
    pelvis-centered; frame_indices: the source frame numbers of the window.
    """

    video: Tensor
    target: Tensor
    clip_id: str
    frame_indices: tuple[int, ...]


def crop_square(frame: np.ndarray, box) -> np.ndarray:
    """Crop `box` = (x, y, w, h) from an [H, W, C] frame, extended to a square
    of side max(w, h). The extension is split evenly across the shorter
    dimension (extra pixel to the trailing side when odd); anything outside
    the image is zero-filled.
    """
    x, y, w, h = (int(v) for v in box)
    if w <= 0 or h <= 0:
        raise DataError(f"zero-area box {tuple(box)}")
    side = max(w, h)
    x0 = x - (side - w) // 2
    y0 = y - (side - h) // 2
    out = np.zeros((side, side) + frame.shape[2:], dtype=frame.dtype)
    src_x0, src_x1 = max(x0, 0), min(x0 + side, frame.shape[1])
    src_y0, src_y1 = max(y0, 0), min(y0 + side, frame.shape[0])
    if src_x0 < src_x1 and src_y0 < src_y1:
        out[src_y0 - y0:src_y1 - y0, src_x0 - x0:src_x1 - x0] = \
            frame[src_y0:src_y1, src_x0:src_x1]
    return out


def resize_bilinear(image: np.ndarray, target: int = 128) -> np.ndarray:
    """Bilinear resize of a square [S, S, C] (or [S, S]) image to target x target.

    Uses the half-pixel-center convention: source coordinate of output pixel i
    is (i + 0.5) * S / target - 0.5, clamped to the image. A same-size resize
    is bit-identical to the input.
    """
    if image.ndim not in (2, 3) or image.shape[0] != image.shape[1]:
        raise ShapeError(f"expected a square image, got shape {image.shape}")
    s = image.shape[0]
    img = image.astype(np.float64, copy=False)
    coords = (np.arange(target, dtype=np.float64) + 0.5) * (s / target) - 0.5
    coords = np.clip(coords, 0.0, s - 1)
    i0 = np.floor(coords).astype(np.int64)
    i1 = np.minimum(i0 + 1, s - 1)
    f = coords - i0

    fy, fx = f[:, None], f[None, :]
    if image.ndim == 3:
        fy, fx = fy[..., None], fx[..., None]
    top = img[np.ix_(i0, i0)] * (1 - fx) + img[np.ix_(i0, i1)] * fx
    bot = img[np.ix_(i1, i0)] * (1 - fx) + img[np.ix_(i1, i1)] * fx
    return top * (1 - fy) + bot * fy


def gcn(stack: np.ndarray) -> np.ndarray:
    """Global contrast normalization per colour channel over a [3, T, S, S]
    stack: subtract the channel mean, divide by max(stddev, 1e-8). Constant
    channels come out all-zero."""
    if stack.ndim != 4:
        raise ShapeError(f"expected [channels, frames, h, w], got {stack.shape}")
    x = stack.astype(np.float64, copy=False)
    mean = x.mean(axis=(1, 2, 3), keepdims=True)
    std = x.std(axis=(1, 2, 3), keepdims=True)
    return (x - mean) / np.maximum(std, GCN_EPS)


def center_pelvis(joints: np.ndarray) -> np.ndarray:
    """Express joints relative to the pelvis (joint 0) per frame; the pelvis
    becomes exactly (0, 0, 0). Idempotent and translation-invariant."""
    j = np.asarray(joints, dtype=np.float64)
    if j.ndim != 3 or j.shape[-1] != 3:
        raise ShapeError(f"expected [frames, joints, 3], got {j.shape}")
    return j - j[:, :1, :]


def decimation_stride(source_fps: float, target_hz: float = DEFAULT_TARGET_HZ) -> int:
    """Integer frame stride approximating target_hz from source_fps."""
    if source_fps <= 0 or target_hz <= 0:
        raise DataError("frame rates must be positive")
    return max(1, int(round(source_fps / target_hz)))


def decimated_indices(n_frames: int, source_fps: float,
                      target_hz: float = DEFAULT_TARGET_HZ) -> list[int]:
    return list(range(0, n_frames, decimation_stride(source_fps, target_hz)))


def preprocess_window(clip: RawClip, frame_indices, resize_to: int = 128,
                      dtype=np.float64) -> ClipSample:
    """Crop, resize, stack channel-first, contrast-normalize, center targets."""
    planes = []
    for fi in frame_indices:
        crop = crop_square(clip.frames[fi], clip.boxes[fi])
        planes.append(resize_bilinear(crop, resize_to))
    stack = np.stack(planes, axis=0)          # [T, S, S, 3]
    stack = np.moveaxis(stack, 3, 0)          # [3, T, S, S]
    video = gcn(stack).astype(dtype, copy=False)
    target = center_pelvis(clip.joints[list(frame_indices)])
    return ClipSample(video=Tensor._wrap(np.ascontiguousarray(video)),
                      target=Tensor._wrap(target),
                      clip_id=clip.clip_id,
                      frame_indices=tuple(int(i) for i in frame_indices))


def sample_windows(clip: RawClip, target_hz: float = DEFAULT_TARGET_HZ,
                   window: int = WINDOW, rng: RngState | None = None,
                   max_windows: int | None = None, resize_to: int = 128,
                   dtype=np.float64) -> list[ClipSample]:
    """Windows of `window` consecutive decimated frames from one clip.

    Start offsets are drawn seeded-randomly without replacement when
    `max_windows` limits the count (all starts otherwise); results are ordered
    by window start. A clip too short for a single window yields an empty
    list with a warning, not an error.
    """
    dec = decimated_indices(clip.n_frames, clip.fps, target_hz)
    n_starts = len(dec) - window + 1
    if n_starts < 1:
        logger.warning("clip %s: %d frames give %d decimated frames, too short for a "
                       "%d-frame window; skipped", clip.clip_id, clip.n_frames, len(dec), window)
        return []
    if max_windows is None or max_windows >= n_starts:
        starts = list(range(n_starts))
    else:
        starts = (rng or RngState(0)).sample_indices(n_starts, max_windows)
    return [preprocess_window(clip, dec[s:s + window], resize_to, dtype) for s in starts]


def preprocess_stream(clip: RawClip, target_hz: float = DEFAULT_TARGET_HZ,
                      resize_to: int = 128) -> tuple[np.ndarray, list[int]]:
    """Crop+resize every decimated frame (no contrast normalization; that is
    per-window). Returns ([N, S, S, 3] float64, source frame indices). This is
    the input stream for sliding-window inference."""
    dec = decimated_indices(clip.n_frames, clip.fps, target_hz)
    frames = np.stack([resize_bilinear(crop_square(clip.frames[i], clip.boxes[i]), resize_to)
                       for i in dec], axis=0)
    return frames, dec
