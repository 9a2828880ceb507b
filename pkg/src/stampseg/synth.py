"""Synthetic piecewise-constant feature sequences with known segmentations."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import FeatureSequence, TimestampAnnotation, ValidationError
from .io import (
    ClassTable,
    DatasetManifest,
    VideoEntry,
    save_features,
    save_labels,
    save_manifest,
    save_timestamps,
)
from .metrics import segments


@dataclass(frozen=True)
class SynthConfig:
    videos: int = 20
    t_min: int = 400
    t_max: int = 800
    n_min: int = 6
    n_max: int = 12
    dim: int = 16
    classes: int = 8
    mu: float = 4.0
    sigma: float = 1.0
    min_len: int = 10
    seed: int = 7
    timestamp_mode: str = "middle"

    def __post_init__(self):
        if self.videos < 0:
            raise ValidationError("videos must be >= 0")
        if not 1 <= self.t_min <= self.t_max:
            raise ValidationError("need 1 <= t_min <= t_max")
        if not 1 <= self.n_min <= self.n_max:
            raise ValidationError("need 1 <= n_min <= n_max")
        if self.min_len < 1 or self.min_len * self.n_max > self.t_min:
            raise ValidationError(f"infeasible lengths: min_len * n_max = {self.min_len * self.n_max} "
                                  f"exceeds t_min = {self.t_min}")
        if self.n_max > 1 and self.classes < 2:
            raise ValidationError("at least two classes are needed for multi-segment videos")
        if self.dim < 1 or self.classes < 1:
            raise ValidationError("dim and classes must be >= 1")
        if self.mu <= 0 or self.sigma < 0:
            raise ValidationError("need mu > 0 and sigma >= 0")
        if self.timestamp_mode not in ("middle", "random"):
            raise ValidationError(f"unknown timestamp_mode {self.timestamp_mode!r}")


def class_names(C: int) -> list[str]:
    return [f"action{c:02d}" for c in range(C)]


def derive_timestamps(gt, num_classes: int, mode: str = "middle",
                      rng: np.random.Generator | None = None) -> TimestampAnnotation:
    """One annotated frame per ground-truth segment (middle frame or uniformly random)."""
    frames, classes = [], []
    for seg in segments(gt):
        if mode == "middle":
            frames.append((seg.start + seg.end - 1) // 2)
        elif mode == "random":
            if rng is None:
                raise ValidationError("random timestamp mode needs a generator")
            frames.append(int(rng.integers(seg.start, seg.end)))
        else:
            raise ValidationError(f"unknown timestamp mode {mode!r}")
        classes.append(seg.label)
    return TimestampAnnotation(frames, classes, num_classes)


@dataclass
class SynthVideo:
    name: str
    features: FeatureSequence
    ground_truth: np.ndarray
    timestamps: TimestampAnnotation


def sample_video(cfg: SynthConfig, means: np.ndarray, rng: np.random.Generator, name: str) -> SynthVideo:
    T = int(rng.integers(cfg.t_min, cfg.t_max + 1))
    N = int(rng.integers(cfg.n_min, cfg.n_max + 1))
    seq = [int(rng.integers(cfg.classes))]
    for _ in range(N - 1):
        c = int(rng.integers(cfg.classes - 1))
        seq.append(c if c < seq[-1] else c + 1)
    # stars and bars: uniform over compositions of the slack into N parts
    slack = T - N * cfg.min_len
    cuts = np.sort(rng.choice(slack + N - 1, N - 1, replace=False))
    parts = np.diff(np.concatenate(([-1], cuts, [slack + N - 1]))) - 1
    gt = np.repeat(np.array(seq, dtype=np.int64), parts + cfg.min_len)
    x = means[gt] + cfg.sigma * rng.standard_normal((T, cfg.dim))
    ts = derive_timestamps(gt, cfg.classes, cfg.timestamp_mode, rng)
    return SynthVideo(name, FeatureSequence(x.astype(np.float32)), gt, ts)


def generate(cfg: SynthConfig) -> tuple[list[SynthVideo], ClassTable]:
    rng = np.random.default_rng(cfg.seed)
    means = rng.standard_normal((cfg.classes, cfg.dim))
    means *= cfg.mu / np.linalg.norm(means, axis=1, keepdims=True)
    videos = [sample_video(cfg, means, rng, f"video{i:03d}") for i in range(cfg.videos)]
    return videos, ClassTable(class_names(cfg.classes))


def synth_generate(cfg: SynthConfig, out: str | Path) -> Path:
    """Write features, ground truth, timestamps and a manifest under ``out``; return the manifest path."""
    out = Path(out)
    for sub in ("features", "groundTruth", "timestamps"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    videos, classes = generate(cfg)
    manifest = DatasetManifest(classes, root=out)
    for v in videos:
        entry = VideoEntry(v.name, out / "features" / f"{v.name}.tseg",
                           out / "groundTruth" / f"{v.name}.txt", out / "timestamps" / f"{v.name}.txt")
        save_features(entry.features, v.features)
        save_labels(entry.ground_truth, v.ground_truth, classes)
        save_timestamps(entry.timestamps, v.timestamps, classes)
        manifest.videos.append(entry)
    path = out / "manifest.txt"
    save_manifest(path, manifest)
    return path
