"""Command-line entry point.

Subcommands: `synth` (synthetic dataset), `train`, `eval`, `predict`.
Settings come from a JSON run-config file with sections `architecture`,
`training`, `data`, `inference`; command-line flags override file values,
which override built-in defaults (the stock training recipe). Unknown keys
or flags are errors.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric divergence. `POSE3D_THREADS` caps preprocessing worker threads.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__, datapipe, dataset
from .errors import ConfigError, DataError, DivergenceError, Pose3dError, ShapeError, WeightsError
from .inference import (
    evaluate,
    export_poses_csv,
    export_report,
    load_baseline_csv,
    predict_clip,
    summarize_actions,
)
from .network import ArchitectureConfig, load_weights, save_weights
from .rng import RngState
from .synthetic import SyntheticSceneSpec, generate_synthetic
from .training import TrainConfig, train

logger = logging.getLogger(__name__)

_TRAINING_KEYS = {"learning_rate", "momentum", "batch_size", "patience",
                  "max_epochs", "seed", "precision", "learn_prelu"}
_DATA_KEYS = {"dataset", "target_hz", "window", "val_fraction", "max_windows_per_clip"}
_INFERENCE_KEYS = {"report", "poses"}
_SECTIONS = {"architecture", "training", "data", "inference"}


@dataclass(frozen=True)
class DataConfig:
    dataset: str | None = None
    target_hz: float = 13.0
    window: int = 5
    val_fraction: float = 0.2
    max_windows_per_clip: int | None = None


@dataclass(frozen=True)
class RunConfig:
    arch: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    training: dict = field(default_factory=dict)
    data: DataConfig = field(default_factory=DataConfig)
    report_path: str | None = None
    poses_path: str | None = None

    def train_config(self) -> TrainConfig:
        return TrainConfig(arch=self.arch, **self.training)


def load_run_config(path) -> RunConfig:
    """Parse and validate a JSON run-config file. Unknown sections or keys
    are rejected with the offending name."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}: {e.msg}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(raw) - _SECTIONS
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")

    arch = ArchitectureConfig.from_dict(raw.get("architecture", {}))

    training = dict(raw.get("training", {}))
    bad = set(training) - _TRAINING_KEYS
    if bad:
        raise ConfigError(f"{path}: unknown training keys {sorted(bad)}")

    data_raw = dict(raw.get("data", {}))
    bad = set(data_raw) - _DATA_KEYS
    if bad:
        raise ConfigError(f"{path}: unknown data keys {sorted(bad)}")
    data = DataConfig(**data_raw)
    if data.window != arch.input_frames:
        raise ConfigError(
            f"{path}: data.window ({data.window}) must equal "
            f"architecture.input_frames ({arch.input_frames})")

    inf = dict(raw.get("inference", {}))
    bad = set(inf) - _INFERENCE_KEYS
    if bad:
        raise ConfigError(f"{path}: unknown inference keys {sorted(bad)}")
    return RunConfig(arch=arch, training=training, data=data,
                     report_path=inf.get("report"), poses_path=inf.get("poses"))


def _worker_count(n_tasks: int) -> int:
    cap = os.environ.get("POSE3D_THREADS")
    workers = min(os.cpu_count() or 1, n_tasks)
    if cap is not None:
        try:
            workers = min(workers, max(1, int(cap)))
        except ValueError as e:
            raise ConfigError(f"POSE3D_THREADS must be an integer, got {cap!r}") from e
    return max(1, workers)


def _preprocess_clips(clips, data: DataConfig, seed: int, resize_to: int, dtype):
    """Windows for every clip, in (clip order, window start) order regardless
    of worker scheduling. Returns (samples, n_skipped_clips)."""

    def one(item):
        idx, clip = item
        rng = RngState(seed).split(1000 + idx)
        return datapipe.sample_windows(
            clip, target_hz=data.target_hz, window=data.window, rng=rng,
            max_windows=data.max_windows_per_clip, resize_to=resize_to, dtype=dtype)

    items = list(enumerate(clips))
    workers = _worker_count(len(items))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_clip = list(pool.map(one, items))
    else:
        per_clip = [one(it) for it in items]
    samples = [s for group in per_clip for s in group]
    skipped = sum(1 for group in per_clip if not group)
    return samples, skipped


def _split_train_val(clips, val_fraction: float):
    """Use manifest val tags when present; otherwise hold out the tail of the
    train clips."""
    train_clips = [c for c in clips if c.meta.get("_split", "train") == "train"]
    val_clips = [c for c in clips if c.meta.get("_split") == "val"]
    if val_clips:
        return train_clips, val_clips
    n_val = max(1, int(round(val_fraction * len(train_clips)))) if len(train_clips) > 1 else 0
    if n_val == 0:
        return train_clips, train_clips  # single clip: validate on the training data
    return train_clips[:-n_val], train_clips[-n_val:]


def _load_clips_with_split(root) -> list:
    clips = []
    for split in ("train", "val"):
        for clip in dataset.load_split(root, split):
            clip.meta["_split"] = split
            clips.append(clip)
    if not clips:
        raise DataError(f"dataset at {root} has no train/val clips")
    return clips


# -- subcommands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    print(f"run seed: {args.seed}")
    spec = SyntheticSceneSpec(seed=args.seed, image_size=args.image_size,
                              fps=args.fps)
    if args.frames < spec.fps / 13.0 * 5:
        logger.warning("clips of %d frames are shorter than one 5-frame window "
                       "after decimation; training on them will find zero windows",
                       args.frames)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = generate_synthetic(spec, args.clips, args.frames, out,
                                 val_clips=args.val_clips, test_clips=args.test_clips)
    print(f"wrote {len(entries)} clips to {out}")
    return 0


def _config_from_args(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    training = dict(cfg.training)
    for key in ("learning_rate", "momentum", "batch_size", "patience",
                "max_epochs", "seed", "precision"):
        v = getattr(args, key, None)
        if v is not None:
            training[key] = v
    data = cfg.data
    if getattr(args, "dataset", None):
        data = replace(data, dataset=args.dataset)
    if getattr(args, "target_hz", None) is not None:
        data = replace(data, target_hz=args.target_hz)
    if getattr(args, "max_windows", None) is not None:
        data = replace(data, max_windows_per_clip=args.max_windows)
    return replace(cfg, training=training, data=data)


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    tc = cfg.train_config()
    print(f"run seed: {tc.seed}")
    if cfg.data.dataset is None:
        raise ConfigError("no dataset given (config data.dataset or --dataset)")
    root = Path(cfg.data.dataset)
    if not (root / dataset.MANIFEST_NAME).exists():
        raise DataError(f"dataset not found: {root}")

    clips = _load_clips_with_split(root)
    train_clips, val_clips = _split_train_val(clips, cfg.data.val_fraction)
    train_set, skipped_t = _preprocess_clips(train_clips, cfg.data, tc.seed,
                                             cfg.arch.input_size, tc.dtype)
    val_set, skipped_v = _preprocess_clips(val_clips, cfg.data, tc.seed + 1,
                                           cfg.arch.input_size, tc.dtype)
    if skipped_t or skipped_v:
        print(f"warning: {skipped_t + skipped_v} clips too short for any window")
    print(f"training on {len(train_set)} windows from {len(train_clips)} clips; "
          f"validating on {len(val_set)} windows")
    if not train_set or not val_set:
        raise DataError("zero usable training or validation windows")

    log_path = args.log or "epochs.csv"
    best, reports = train(tc, train_set, val_set, log_path=log_path)
    save_weights(best, args.out)
    best_val = min(r.val_mpjpe_mm for r in reports)
    print(f"best validation MPJPE: {best_val:.3f} mm over {len(reports)} epochs")
    print(f"weights: {args.out}  epoch log: {log_path}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    params = load_weights(args.weights, cfg.arch if args.config else None)
    root = Path(args.dataset)
    clips = dataset.load_split(root, args.split)
    if not clips:
        raise DataError(f"dataset at {root} has no clips in split {args.split!r}")
    baselines = load_baseline_csv(args.baseline) if args.baseline else None

    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for clip in clips:
        frames, dec = datapipe.preprocess_stream(
            clip, target_hz=args.target_hz, resize_to=params.cfg.input_size)
        preds = predict_clip(params, frames, frame_indices=dec)
        centered = datapipe.center_pelvis(clip.joints)
        truth = {i: centered[i] for i in dec}
        reports, _ = evaluate(preds, truth, clip.action or "unlabeled")
        for r in reports:
            sums[r.action] = sums.get(r.action, 0.0) + r.mpjpe_mm * r.frame_count
            counts[r.action] = counts.get(r.action, 0) + r.frame_count
    means = {a: sums[a] / counts[a] for a in sums}
    reports, overall = summarize_actions(means, counts, baselines)
    export_report(reports, overall, args.report, fmt="csv")
    for r in reports:
        extra = "" if r.improvement_pct is None else f"  (baseline {r.baseline_mm:.0f}, {r.improvement_pct:+.1f}%)"
        print(f"{r.action:<20} {r.mpjpe_mm:9.3f} mm over {r.frame_count} frames{extra}")
    print(f"overall mean MPJPE: {overall:.3f} mm")
    print(f"report: {args.report}")
    return 0


def cmd_predict(args) -> int:
    params = load_weights(args.weights)
    clip_dir = Path(args.clip)
    clip = dataset.read_clip(clip_dir.parent, clip_dir.name)
    frames, dec = datapipe.preprocess_stream(
        clip, target_hz=args.target_hz, resize_to=params.cfg.input_size)
    preds = predict_clip(params, frames, frame_indices=dec)
    export_poses_csv(preds, args.out)
    print(f"wrote {len(preds)} frame poses ({len(preds) * params.cfg.joints} rows) to {args.out}")
    return 0


# -- parser / dispatch ----------------------------------------------------------


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pose3d",
                description="Spatiotemporal 3D CNN pose estimation pipeline")
    p.add_argument("--version", action="version", version=f"pose3d {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic stick-figure dataset")
    sp.add_argument("--out", required=True, help="output dataset directory")
    sp.add_argument("--clips", type=int, default=8, help="number of clips")
    sp.add_argument("--frames", type=int, default=40, help="frames per clip")
    sp.add_argument("--seed", type=int, default=0, help="generator seed")
    sp.add_argument("--image-size", type=int, default=128, help="frame resolution")
    sp.add_argument("--fps", type=float, default=50.0, help="source frame rate")
    sp.add_argument("--val-clips", type=int, default=0, help="clips tagged val")
    sp.add_argument("--test-clips", type=int, default=0, help="clips tagged test")
    sp.set_defaults(func=cmd_synth)

    tp = sub.add_parser("train", help="train a network on a dataset")
    tp.add_argument("--config", help="JSON run-config file")
    tp.add_argument("--dataset", help="dataset directory (overrides config)")
    tp.add_argument("--out", default="weights.bin", help="weights file to write")
    tp.add_argument("--log", help="epoch CSV log path (default epochs.csv)")
    tp.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float)
    tp.add_argument("--momentum", type=float)
    tp.add_argument("--batch-size", dest="batch_size", type=int)
    tp.add_argument("--patience", type=int)
    tp.add_argument("--max-epochs", dest="max_epochs", type=int)
    tp.add_argument("--seed", type=int)
    tp.add_argument("--precision", choices=["float32", "float64"])
    tp.add_argument("--target-hz", dest="target_hz", type=float)
    tp.add_argument("--max-windows", dest="max_windows", type=int,
                    help="cap on training windows per clip")
    tp.set_defaults(func=cmd_train)

    ep = sub.add_parser("eval", help="evaluate weights on a dataset split")
    ep.add_argument("--weights", required=True)
    ep.add_argument("--dataset", required=True)
    ep.add_argument("--split", default="test", choices=["train", "val", "test"])
    ep.add_argument("--report", default="report.csv", help="per-action CSV to write")
    ep.add_argument("--baseline", help="action,mpjpe_mm CSV adding an improvement column")
    ep.add_argument("--config", help="run config whose architecture the weights must match")
    ep.add_argument("--target-hz", dest="target_hz", type=float, default=13.0)
    ep.set_defaults(func=cmd_eval)

    pp = sub.add_parser("predict", help="predict poses for one clip directory")
    pp.add_argument("--weights", required=True)
    pp.add_argument("--clip", required=True, help="clip directory (contains frames/)")
    pp.add_argument("--out", default="poses.csv")
    pp.add_argument("--target-hz", dest="target_hz", type=float, default=13.0)
    pp.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (DataError, WeightsError, ShapeError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except DivergenceError as e:
        print(f"divergence: {e}", file=sys.stderr)
        return 3
    except Pose3dError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
