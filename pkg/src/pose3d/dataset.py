"""On-disk dataset layout.

    dataset/
      manifest.json             {"clips": [{"id", "split", "action"}, ...]}
      <clip_id>/
        frames/000000.png ...   8-bit RGB
        joints.csv              frame,joint,x_mm,y_mm,z_mm
        boxes.csv               frame,x,y,w,h
        meta.json               fps, camera intrinsics, labels

Joints are written with repr() so read-back reproduces every float bit-exactly;
frames are PNG, so pixels round-trip exactly as well.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .datapipe import RawClip
from .errors import DataError

MANIFEST_NAME = "manifest.json"
SPLITS = ("train", "val", "test")


def write_clip(root, clip: RawClip, split: str = "train") -> Path:
    clip_dir = Path(root) / clip.clip_id
    frames_dir = clip_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(clip.frames):
        Image.fromarray(np.asarray(frame, dtype=np.uint8), mode="RGB").save(
            frames_dir / f"{i:06d}.png")
    with open(clip_dir / "joints.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "joint", "x_mm", "y_mm", "z_mm"])
        for f in range(clip.n_frames):
            for j in range(clip.joints.shape[1]):
                x, y, z = clip.joints[f, j]
                w.writerow([f, j, repr(float(x)), repr(float(y)), repr(float(z))])
    with open(clip_dir / "boxes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "x", "y", "w", "h"])
        for f in range(clip.n_frames):
            w.writerow([f] + [int(v) for v in clip.boxes[f]])
    meta = {"fps": clip.fps, "action": clip.action, **clip.meta}
    with open(clip_dir / "meta.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return clip_dir


def read_clip(root, clip_id: str) -> RawClip:
    clip_dir = Path(root) / clip_id
    if not clip_dir.is_dir():
        raise DataError(f"clip not found: {clip_dir}")
    with open(clip_dir / "meta.json") as fh:
        meta = json.load(fh)
    frame_files = sorted((clip_dir / "frames").glob("*.png"))
    if not frame_files:
        raise DataError(f"clip {clip_id} has no frames")
    frames = np.stack([np.asarray(Image.open(p).convert("RGB")) for p in frame_files])

    joints_rows: dict[tuple[int, int], tuple[float, float, float]] = {}
    with open(clip_dir / "joints.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            joints_rows[(int(row["frame"]), int(row["joint"]))] = (
                float(row["x_mm"]), float(row["y_mm"]), float(row["z_mm"]))
    n = len(frame_files)
    n_joints = max(j for _, j in joints_rows) + 1
    joints = np.zeros((n, n_joints, 3), dtype=np.float64)
    for (f, j), xyz in joints_rows.items():
        joints[f, j] = xyz

    boxes = np.zeros((n, 4), dtype=np.int64)
    with open(clip_dir / "boxes.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            boxes[int(row["frame"])] = [int(row["x"]), int(row["y"]),
                                        int(row["w"]), int(row["h"])]

    fps = float(meta.pop("fps"))
    action = meta.pop("action", "")
    return RawClip(clip_id=clip_id, frames=frames, boxes=boxes, joints=joints,
                   fps=fps, action=action, meta=meta)


def write_manifest(root, entries: list[dict]) -> None:
    """entries: [{"id": ..., "split": ..., "action": ...}, ...]"""
    for e in entries:
        if e.get("split") not in SPLITS:
            raise DataError(f"manifest entry {e.get('id')} has bad split {e.get('split')!r}")
    with open(Path(root) / MANIFEST_NAME, "w") as fh:
        json.dump({"clips": entries}, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_manifest(root) -> list[dict]:
    path = Path(root) / MANIFEST_NAME
    if not path.exists():
        raise DataError(f"dataset not found: {Path(root)} (no {MANIFEST_NAME})")
    with open(path) as fh:
        data = json.load(fh)
    return list(data["clips"])


def load_split(root, split: str) -> list[RawClip]:
    """All clips tagged with `split`, in manifest order."""
    if split not in SPLITS:
        raise DataError(f"unknown split {split!r}; expected one of {SPLITS}")
    clips = []
    for entry in read_manifest(root):
        if entry["split"] == split:
            clip = read_clip(root, entry["id"])
            clip.action = entry.get("action", clip.action)
            clips.append(clip)
    return clips
