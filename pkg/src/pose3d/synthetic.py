"""Synthetic stick-figure dataset generator for desk-scale verification.

An articulated 17-joint skeleton walks (or waves) in place in front of a
pinhole camera. Frames are rendered anti-aliased (4x supersampling, box
downfilter) with one distinct marker colour per joint so tests can re-locate
joints in the pixels and check them against the projection of the stored 3D
coordinates. Joints are stored in camera-frame millimetres; boxes are tight
around the projected figure.

Everything is a pure function of the spec seed: regenerating a dataset
produces byte-identical files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw

from .datapipe import RawClip
from .dataset import write_clip, write_manifest
from .errors import ConfigError
from .rng import RngState

N_JOINTS = 17

# Joint layout: 0 pelvis; 1-3 right leg (hip, knee, ankle); 4-6 left leg;
# 7 spine, 8 thorax, 9 neck, 10 head; 11-13 left arm (shoulder, elbow,
# wrist); 14-16 right arm.
BONES = (
    (0, 1), (1, 2), (2, 3),
    (0, 4), (4, 5), (5, 6),
    (0, 7), (7, 8), (8, 9), (9, 10),
    (8, 11), (11, 12), (12, 13),
    (8, 14), (14, 15), (15, 16),
)

JOINT_PALETTE = (
    (230, 60, 60), (60, 180, 60), (70, 90, 235), (235, 180, 40),
    (200, 60, 200), (50, 200, 200), (240, 120, 40), (130, 220, 60),
    (80, 60, 220), (220, 60, 130), (60, 220, 140), (180, 140, 40),
    (90, 170, 240), (240, 170, 170), (150, 80, 40), (40, 130, 110),
    (190, 190, 60),
)

BACKGROUND = (10, 12, 20)
_SUPERSAMPLE = 4


@dataclass(frozen=True)
class SyntheticSceneSpec:
    """Parameters of the synthetic scene; every clip derives from `seed`."""

    seed: int = 0
    image_size: int = 128
    fps: float = 50.0
    camera_depth_mm: float = 3000.0
    focal_px: float | None = None      # default 1.1 * image_size
    gait_hz: float = 1.2
    swing_amplitude: float = 0.55      # radians of thigh swing
    scene_scale: float = 1.0           # scales all mm geometry; pixels are invariant
    actions: tuple[str, ...] = ("walking", "waving")
    limb_mm: dict = field(default_factory=lambda: {
        "hip_offset": 110.0, "thigh": 430.0, "shin": 420.0,
        "spine": 230.0, "thorax": 230.0, "neck": 110.0, "head": 120.0,
        "shoulder_offset": 170.0, "upper_arm": 280.0, "forearm": 250.0,
    })

    @property
    def intrinsics(self) -> tuple[float, float, float, float]:
        f = self.focal_px if self.focal_px is not None else 1.1 * self.image_size
        return (f, f, self.image_size / 2.0, self.image_size / 2.0)

    def marker_radius(self) -> int:
        return max(2, round(self.image_size / 48))

    def line_width(self) -> int:
        return max(1, self.image_size // 64)


def _pose_at(spec: SyntheticSceneSpec, action: str, t: float, phase: float,
             freq: float, amp: float) -> np.ndarray:
    """Joint positions [17, 3] in camera-frame mm at time t seconds.

    Camera axes: x right, y down, z away from the camera; the body stands
    along -y at depth scene_scale * camera_depth_mm. Because the whole scene
    (limbs, sway, depth) is multiplied by scene_scale, projections and hence
    pixels are identical across scales; only the stored millimetres change.
    """
    k = spec.scene_scale
    L = {name: k * v for name, v in spec.limb_mm.items()}
    w = 2.0 * math.pi * freq
    joints = np.zeros((N_JOINTS, 3))

    sway = k * 30.0 * math.sin(w * t + phase)
    bob = k * 22.0 * math.sin(2.0 * w * t + phase)
    pelvis = np.array([sway, bob, k * spec.camera_depth_mm])
    joints[0] = pelvis

    def sagittal(angle: float) -> np.ndarray:
        # 0 rad points straight down (+y); positive swings toward the camera.
        return np.array([0.0, math.cos(angle), -math.sin(angle)])

    leg_amp = amp if action == "walking" else 0.12 * amp
    for side, hip_idx in ((-1.0, 1), (+1.0, 4)):
        hip = pelvis + np.array([side * L["hip_offset"], 0.0, 0.0])
        th = leg_amp * math.sin(w * t + phase + (0.0 if side < 0 else math.pi))
        knee_flex = 0.9 * leg_amp * max(0.0, math.sin(w * t + phase +
                                                      (0.5 if side < 0 else 0.5 + math.pi)))
        knee = hip + L["thigh"] * sagittal(th)
        ankle = knee + L["shin"] * sagittal(th - knee_flex)
        joints[hip_idx] = hip
        joints[hip_idx + 1] = knee
        joints[hip_idx + 2] = ankle

    spine = pelvis + np.array([0.0, -L["spine"], 0.0])
    thorax = spine + np.array([0.0, -L["thorax"], 0.0])
    neck = thorax + np.array([0.0, -L["neck"], 0.0])
    head = neck + np.array([0.0, -L["head"], 0.0])
    joints[7], joints[8], joints[9], joints[10] = spine, thorax, neck, head

    arm_amp = 0.7 * amp
    for side, sh_idx in ((+1.0, 11), (-1.0, 14)):
        shoulder = thorax + np.array([side * L["shoulder_offset"], -20.0 * k, 0.0])
        if action == "waving" and side > 0:
            # left arm raised sideways, oscillating about horizontal
            psi = 0.55 * math.pi + 0.25 * math.sin(2.0 * w * t + phase)
            direction = np.array([math.sin(psi), math.cos(psi), 0.0])
            elbow = shoulder + L["upper_arm"] * direction
            wrist = elbow + L["forearm"] * np.array(
                [math.sin(psi + 0.4), math.cos(psi + 0.4), 0.0])
        else:
            ph = w * t + phase + (math.pi if side > 0 else 0.0)
            elbow = shoulder + L["upper_arm"] * sagittal(arm_amp * math.sin(ph))
            wrist = elbow + L["forearm"] * sagittal(arm_amp * math.sin(ph) + 0.3)
        joints[sh_idx] = shoulder
        joints[sh_idx + 1] = elbow
        joints[sh_idx + 2] = wrist
    return joints


def project(joints_mm: np.ndarray, intrinsics) -> np.ndarray:
    """Pinhole projection of camera-frame [.., 3] mm points to pixel (u, v)."""
    fx, fy, cx, cy = intrinsics
    z = joints_mm[..., 2]
    u = fx * joints_mm[..., 0] / z + cx
    v = fy * joints_mm[..., 1] / z + cy
    return np.stack([u, v], axis=-1)


def render_frame(joints_mm: np.ndarray, spec: SyntheticSceneSpec) -> np.ndarray:
    """Anti-aliased uint8 [S, S, 3] rendering of the skeleton."""
    s, ss = spec.image_size, _SUPERSAMPLE
    uv = project(joints_mm, spec.intrinsics) * ss
    img = Image.new("RGB", (s * ss, s * ss), BACKGROUND)
    draw = ImageDraw.Draw(img)
    lw = spec.line_width() * ss
    for li, (a, b) in enumerate(BONES):
        shade = 140 + 5 * li
        draw.line([tuple(uv[a]), tuple(uv[b])], fill=(shade, shade, shade), width=lw)
    r = spec.marker_radius() * ss
    for j in range(N_JOINTS):
        u, v = uv[j]
        draw.ellipse([u - r, v - r, u + r, v + r], fill=JOINT_PALETTE[j])
    return np.asarray(img.reduce(ss))


def _tight_box(uv: np.ndarray, spec: SyntheticSceneSpec) -> tuple[int, int, int, int]:
    pad = spec.marker_radius() + spec.line_width() + 1
    s = spec.image_size
    x0 = max(0, int(math.floor(uv[:, 0].min())) - pad)
    y0 = max(0, int(math.floor(uv[:, 1].min())) - pad)
    x1 = min(s, int(math.ceil(uv[:, 0].max())) + pad)
    y1 = min(s, int(math.ceil(uv[:, 1].max())) + pad)
    return (x0, y0, x1 - x0, y1 - y0)


def make_clip(spec: SyntheticSceneSpec, clip_index: int, n_frames: int) -> RawClip:
    """One deterministic clip; per-clip phase/rate/amplitude jitter comes from
    spec.seed and clip_index."""
    rng = RngState(spec.seed).split(clip_index)
    phase = rng.uniform() * 2.0 * math.pi
    freq = spec.gait_hz * (0.9 + 0.2 * rng.uniform())
    amp = spec.swing_amplitude * (0.85 + 0.3 * rng.uniform())
    action = spec.actions[clip_index % len(spec.actions)]

    margin = spec.marker_radius() + spec.line_width() + 1
    frames, boxes, joints = [], [], []
    for f in range(n_frames):
        j = _pose_at(spec, action, f / spec.fps, phase, freq, amp)
        uv = project(j, spec.intrinsics)
        if (uv < margin).any() or (uv >= spec.image_size - margin).any():
            raise ConfigError(
                f"clip {clip_index} frame {f}: skeleton leaves the "
                f"{spec.image_size}x{spec.image_size} frame; shrink motion or widen the camera")
        frames.append(render_frame(j, spec))
        boxes.append(_tight_box(uv, spec))
        joints.append(j)

    fx, fy, cx, cy = spec.intrinsics
    return RawClip(
        clip_id=f"clip_{clip_index:03d}",
        frames=np.stack(frames),
        boxes=np.array(boxes, dtype=np.int64),
        joints=np.stack(joints),
        fps=spec.fps,
        action=action,
        meta={"intrinsics": {"fx": fx, "fy": fy, "cx": cx, "cy": cy},
              "camera_depth_mm": spec.camera_depth_mm,
              "image_size": spec.image_size,
              "generator_seed": spec.seed},
    )


def generate_synthetic(spec: SyntheticSceneSpec, n_clips: int, frames_per_clip: int,
                       out_dir, val_clips: int = 0, test_clips: int = 0) -> list[dict]:
    """Write `n_clips` clips plus a manifest under out_dir; returns the
    manifest entries. The last `test_clips` go to the test split, the
    `val_clips` before them to val, the rest to train."""
    if n_clips < 1 or frames_per_clip < 1:
        raise ConfigError("need at least one clip and one frame per clip")
    if val_clips + test_clips > n_clips:
        raise ConfigError("val_clips + test_clips exceed n_clips")
    entries = []
    for i in range(n_clips):
        clip = make_clip(spec, i, frames_per_clip)
        if i >= n_clips - test_clips:
            split = "test"
        elif i >= n_clips - test_clips - val_clips:
            split = "val"
        else:
            split = "train"
        write_clip(out_dir, clip, split)
        entries.append({"id": clip.clip_id, "split": split, "action": clip.action})
    write_manifest(out_dir, entries)
    return entries
