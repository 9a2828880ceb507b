"""Domain types shared across the pipeline.

Frames are 0-indexed and every segment range is half-open ``[start, end)``.
Labels are dense integer class ids; ``AMBIGUOUS`` (-1) marks frames that carry
no pseudo-label.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

AMBIGUOUS = -1


class ValidationError(ValueError):
    """Raised when an input violates a domain invariant."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FeatureSequence:
    """T x D matrix of per-frame features, stored as float32."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float32, copy=True)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise ValidationError(f"features must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError(f"features need T >= 1 and D >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            bad = int(np.argwhere(~np.isfinite(data))[0, 0])
            raise ValidationError(f"non-finite feature value at frame {bad}")
        object.__setattr__(self, "data", _readonly(data))

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def D(self) -> int:
        return self.data.shape[1]

    def view(self, start: int, stop: int) -> "FeatureSequence":
        """Column range ``[start, stop)`` of the features."""
        if not 0 <= start < stop <= self.D:
            raise ValidationError(f"feature view [{start}, {stop}) outside 0..{self.D}")
        return FeatureSequence(self.data[:, start:stop])

    def as_float64(self) -> np.ndarray:
        return self.data.astype(np.float64)


@dataclass(frozen=True)
class TimestampAnnotation:
    """One annotated frame per action segment, in temporal order."""

    frames: np.ndarray
    classes: np.ndarray
    num_classes: int

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.int64).reshape(-1).copy()
        classes = np.asarray(self.classes, dtype=np.int64).reshape(-1).copy()
        if frames.shape != classes.shape:
            raise ValidationError("timestamp frames and classes differ in length")
        if self.num_classes < 1:
            raise ValidationError("num_classes must be >= 1")
        if len(frames) and frames[0] < 0:
            raise ValidationError(f"timestamp 0 has negative frame {frames[0]}")
        for n in range(1, len(frames)):
            if frames[n] <= frames[n - 1]:
                raise ValidationError(
                    f"timestamp frames not strictly increasing at entry {n} "
                    f"({frames[n - 1]} then {frames[n]})")
            if classes[n] == classes[n - 1]:
                raise ValidationError(
                    f"timestamps {n - 1} and {n} share class {classes[n]}; "
                    "adjacent segments must differ")
        if len(classes) and (classes.min() < 0 or classes.max() >= self.num_classes):
            raise ValidationError(f"timestamp class outside [0, {self.num_classes})")
        object.__setattr__(self, "frames", _readonly(frames))
        object.__setattr__(self, "classes", _readonly(classes))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]], num_classes: int) -> "TimestampAnnotation":
        pairs = list(pairs)
        return cls([p[0] for p in pairs], [p[1] for p in pairs], num_classes)

    @property
    def N(self) -> int:
        return len(self.frames)

    def check_length(self, T: int) -> None:
        if self.N and self.frames[-1] > T - 1:
            raise ValidationError(f"timestamp frame {self.frames[-1]} beyond last frame {T - 1}")


@dataclass(frozen=True)
class SegmentPartition:
    """Head-to-tail segmentation: segment n is ``[boundaries[n], boundaries[n+1])``."""

    boundaries: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=np.int64).reshape(-1).copy()
        if len(b) < 2 or b[0] != 0 or np.any(np.diff(b) <= 0):
            raise ValidationError(f"boundaries must start at 0 and increase strictly: {b.tolist()}")
        object.__setattr__(self, "boundaries", _readonly(b))

    @property
    def T(self) -> int:
        return int(self.boundaries[-1])

    @property
    def num_segments(self) -> int:
        return len(self.boundaries) - 1

    def check(self, ts: TimestampAnnotation) -> None:
        b = self.boundaries
        if self.num_segments != ts.N:
            raise ValidationError(f"partition has {self.num_segments} segments for {ts.N} timestamps")
        for n, tau in enumerate(ts.frames):
            if not b[n] <= tau < b[n + 1]:
                raise ValidationError(
                    f"timestamp {n} at frame {tau} outside its segment [{b[n]}, {b[n + 1]})")


@dataclass(frozen=True)
class Violation:
    invariant: str
    frame: int

    def __str__(self):
        return f"{self.invariant} (frame {self.frame})"


def label_runs(labels: np.ndarray) -> list[tuple[int, int, int]]:
    """Maximal runs ``(start, end, class)`` of equal labels, ambiguous runs dropped."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        return []
    change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [len(labels)]))
    return [(int(s), int(e), int(labels[s])) for s, e in zip(starts, ends) if labels[s] != AMBIGUOUS]


def _structural_violation(labels: np.ndarray) -> Violation | None:
    runs = label_runs(labels)
    for (s0, _, c0), (s1, _, c1) in zip(runs, runs[1:]):
        if c0 == c1:
            return Violation(f"class {c0} occurs as two adjacent runs", s1)
    return None


@dataclass(frozen=True)
class PseudoLabelSequence:
    """Per-frame class ids with ``AMBIGUOUS`` gaps between labeled runs.

    Construction only checks the annotation-free invariant (neighbouring runs
    have distinct classes); use :func:`validate_pseudo_labels` to check against
    timestamps.
    """

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1).copy()
        if len(labels) == 0:
            raise ValidationError("empty label sequence")
        if np.any(labels < AMBIGUOUS):
            raise ValidationError(f"invalid label id at frame {int(np.argmax(labels < AMBIGUOUS))}")
        v = _structural_violation(labels)
        if v is not None:
            raise ValidationError(str(v))
        object.__setattr__(self, "labels", _readonly(labels))

    @property
    def T(self) -> int:
        return len(self.labels)

    @property
    def segments(self) -> list[tuple[int, int, int]]:
        """Labeled runs ``(l_n, r_n, class)`` in temporal order."""
        return label_runs(self.labels)

    @property
    def num_labeled(self) -> int:
        return int(np.count_nonzero(self.labels != AMBIGUOUS))

    @property
    def label_rate(self) -> float:
        return 100.0 * self.num_labeled / self.T

    @property
    def is_full(self) -> bool:
        return self.num_labeled == self.T

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        segs = self.segments
        return (np.array([s[0] for s in segs], dtype=np.int64),
                np.array([s[1] for s in segs], dtype=np.int64))

    @classmethod
    def from_bounds(cls, left: Sequence[int], right: Sequence[int], ts: TimestampAnnotation,
                    T: int) -> "PseudoLabelSequence":
        labels = np.full(T, AMBIGUOUS, dtype=np.int64)
        for l, r, c in zip(left, right, ts.classes):
            labels[l:r] = c
        return cls(labels)


def validate_pseudo_labels(pl: PseudoLabelSequence | np.ndarray,
                           ts: TimestampAnnotation) -> Violation | None:
    """Check every pseudo-label invariant against ``ts``.

    Returns ``None`` when valid, otherwise the first violated invariant.
    """
    labels = pl.labels if isinstance(pl, PseudoLabelSequence) else np.asarray(pl, dtype=np.int64)
    T = len(labels)
    for n, tau in enumerate(ts.frames):
        if tau >= T:
            return Violation(f"timestamp {n} beyond sequence end", int(tau))
        if labels[tau] != ts.classes[n]:
            return Violation(f"timestamp {n} not labeled with its class {ts.classes[n]}", int(tau))
    v = _structural_violation(labels)
    if v is not None:
        return v
    runs = label_runs(labels)
    if len(runs) != ts.N:
        extra = runs[ts.N][0] if len(runs) > ts.N else 0
        return Violation(f"{len(runs)} labeled runs for {ts.N} timestamps", extra)
    for n, ((s, e, c), tau) in enumerate(zip(runs, ts.frames)):
        if not s <= tau < e:
            return Violation(f"run {n} does not contain timestamp {n}", s)
        if c != ts.classes[n]:
            return Violation(f"run {n} has class {c}, expected {ts.classes[n]}", s)
    return None


def check_pseudo_labels(pl: PseudoLabelSequence, ts: TimestampAnnotation) -> None:
    v = validate_pseudo_labels(pl, ts)
    if v is not None:
        raise ValidationError(f"invalid pseudo-labels: {v}")


def partition_to_labels(partition: SegmentPartition, ts: TimestampAnnotation) -> PseudoLabelSequence:
    partition.check(ts)
    b = partition.boundaries
    return PseudoLabelSequence(np.repeat(ts.classes, np.diff(b)))


def labels_to_partition(pl: PseudoLabelSequence) -> SegmentPartition:
    """Inverse of :func:`partition_to_labels` for full sequences."""
    if not pl.is_full:
        raise ValidationError("partition view requires a sequence without ambiguous frames")
    segs = pl.segments
    return SegmentPartition([s[0] for s in segs] + [pl.T])
