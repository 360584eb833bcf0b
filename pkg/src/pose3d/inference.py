"""Sliding-window inference with overlap averaging, MPJPE evaluation, and
per-action reporting.

The network maps a 5-frame window to poses for all 5 frames, so at inference
every frame of a decimated stream is predicted by up to 5 windows (one per
position it can occupy). Those overlapping estimates are averaged; frames
near the clip edges are covered by fewer windows and average over what they
have (1 to 4). Poses stay pelvis-relative millimetres throughout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .datapipe import gcn
from .errors import DataError, ShapeError
from .network import NetworkParams, forward
from .tensor import Tensor
from .training import mpjpe


@dataclass(frozen=True)
class FramePrediction:
    """Averaged pose for one stream frame."""

    frame_index: int
    joints: np.ndarray          # [17, 3] mm, pelvis-relative
    window_count: int           # how many windows contributed (1..window)


def predict_clip(params: NetworkParams, frames: np.ndarray,
                 frame_indices: Sequence[int] | None = None) -> list[FramePrediction]:
    """Predict every frame of a preprocessed decimated stream.

    frames: [N, S, S, 3] crop-resized (not yet contrast-normalized) pixels;
    normalization happens per window, exactly as in training. Emits one
    FramePrediction per stream frame, indices strictly increasing. Needs at
    least one full window of frames.
    """
    cfg = params.cfg
    window = cfg.input_frames
    n = len(frames)
    if n < window:
        raise DataError(f"stream has {n} frames; need at least {window} for one window")
    if frame_indices is None:
        frame_indices = list(range(n))
    elif len(frame_indices) != n:
        raise ShapeError("frame_indices length does not match the stream")

    shape = (cfg.output_frames, cfg.joints, 3)
    sums = np.zeros((n,) + shape[1:], dtype=np.float64)
    counts = np.zeros(n, dtype=np.int64)
    for s in range(n - window + 1):
        stack = np.moveaxis(frames[s:s + window], 3, 0)       # [3, T, S, S]
        video = Tensor._wrap(np.ascontiguousarray(
            gcn(stack).astype(params.dtype, copy=False)))
        out, _ = forward(params, video)
        poses = out.numpy().astype(np.float64).reshape(shape)
        for p in range(window):
            sums[s + p] += poses[p]
            counts[s + p] += 1
    return [FramePrediction(frame_index=int(frame_indices[f]),
                            joints=sums[f] / counts[f],
                            window_count=int(counts[f]))
            for f in range(n)]


def frame_mpjpe(pred_joints: np.ndarray, true_joints: np.ndarray) -> float:
    """MPJPE of a single frame: mean joint distance in mm."""
    return mpjpe(Tensor(pred_joints[None]), Tensor(true_joints[None]))


@dataclass(frozen=True)
class ActionReport:
    """Per-action summary row; improvement is relative to the baseline."""

    action: str
    mpjpe_mm: float
    frame_count: int
    baseline_mm: float | None = None
    improvement_pct: float | None = None


def evaluate(predictions: Sequence[FramePrediction], truth: Mapping[int, np.ndarray],
             actions: Mapping[int, str] | str,
             baselines: Mapping[str, float] | None = None
             ) -> tuple[list[ActionReport], float]:
    """Per-action mean MPJPE plus the overall mean.

    truth maps frame index -> pelvis-centered [17, 3] joints; actions maps
    frame index -> action name (or one name for the whole stream). Every
    predicted frame must have ground truth. The overall value is the
    unweighted mean of the per-action means. With `baselines`, each report
    gains the baseline value and (baseline - ours) / baseline * 100.
    """
    if not predictions:
        raise DataError("no predictions to evaluate")
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for p in predictions:
        if p.frame_index not in truth:
            raise DataError(f"no ground truth for predicted frame {p.frame_index}")
        action = actions if isinstance(actions, str) else actions[p.frame_index]
        err = frame_mpjpe(p.joints, truth[p.frame_index])
        sums[action] = sums.get(action, 0.0) + err
        counts[action] = counts.get(action, 0) + 1
    means = {a: sums[a] / counts[a] for a in sums}
    return summarize_actions(means, counts, baselines)


def summarize_actions(action_means: Mapping[str, float],
                      frame_counts: Mapping[str, int] | None = None,
                      baselines: Mapping[str, float] | None = None
                      ) -> tuple[list[ActionReport], float]:
    """Build sorted ActionReports from per-action means; overall mean is
    unweighted across actions."""
    if not action_means:
        raise DataError("no per-action values to summarize")
    reports = []
    for action in sorted(action_means):
        mean = float(action_means[action])
        base = None if baselines is None else baselines.get(action)
        imp = None if base is None else (base - mean) / base * 100.0
        reports.append(ActionReport(action=action, mpjpe_mm=mean,
                                    frame_count=0 if frame_counts is None
                                    else int(frame_counts.get(action, 0)),
                                    baseline_mm=base, improvement_pct=imp))
    overall = float(np.mean([r.mpjpe_mm for r in reports]))
    return reports, overall


REPORT_COLUMNS = ("action", "mpjpe_mm", "baseline_mm", "improvement_pct")


def export_report(reports: Sequence[ActionReport], overall: float, path,
                  fmt: str = "csv") -> None:
    """Write the per-action table plus an Average row.

    csv: machine-parseable, empty cells for missing baselines.
    table: fixed-width text for terminals.
    """
    if not reports:
        raise DataError("empty report")
    if fmt not in ("csv", "table"):
        raise ValueError(f"format must be 'csv' or 'table', got {fmt!r}")
    base_vals = [r.baseline_mm for r in reports if r.baseline_mm is not None]
    overall_base = float(np.mean(base_vals)) if len(base_vals) == len(reports) else None
    overall_imp = (None if overall_base is None
                   else (overall_base - overall) / overall_base * 100.0)
    rows = [(r.action, r.mpjpe_mm, r.baseline_mm, r.improvement_pct) for r in reports]
    rows.append(("Average", overall, overall_base, overall_imp))

    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(REPORT_COLUMNS)
            for action, ours, base, imp in rows:
                w.writerow([action, repr(float(ours)),
                            "" if base is None else repr(float(base)),
                            "" if imp is None else repr(float(imp))])
    else:
        with open(path, "w") as fh:
            fh.write(f"{'action':<20} {'mpjpe_mm':>10} {'baseline':>10} {'improve%':>9}\n")
            for action, ours, base, imp in rows:
                fh.write(f"{action:<20} {ours:>10.2f} "
                         f"{'-' if base is None else format(base, '>10.2f'):>10} "
                         f"{'-' if imp is None else format(imp, '>8.1f') + '%':>9}\n")


def load_report_csv(path) -> tuple[list[ActionReport], float]:
    """Inverse of export_report(fmt='csv')."""
    reports = []
    overall = None
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ours = float(row["mpjpe_mm"])
            base = float(row["baseline_mm"]) if row["baseline_mm"] else None
            imp = float(row["improvement_pct"]) if row["improvement_pct"] else None
            if row["action"] == "Average":
                overall = ours
                continue
            reports.append(ActionReport(action=row["action"], mpjpe_mm=ours,
                                        frame_count=0, baseline_mm=base,
                                        improvement_pct=imp))
    if overall is None:
        raise DataError(f"{path}: report has no Average row")
    return reports, overall


def load_baseline_csv(path) -> dict[str, float]:
    """action,mpjpe_mm CSV -> dict (an Average row, if present, is ignored)."""
    out: dict[str, float] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["action"] != "Average":
                out[row["action"]] = float(row["mpjpe_mm"])
    if not out:
        raise DataError(f"{path}: no baseline rows")
    return out


def export_poses_csv(predictions: Sequence[FramePrediction], path) -> None:
    """Per-frame joint dump: frame,joint,x,y,z (mm, pelvis-relative)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "joint", "x", "y", "z"])
        for p in predictions:
            for j in range(p.joints.shape[0]):
                x, y, z = p.joints[j]
                w.writerow([p.frame_index, j, repr(float(x)), repr(float(y)), repr(float(z))])
