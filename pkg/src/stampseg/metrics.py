"""Frame accuracy, segmental edit score, F1@k and pseudo-label quality.

No class is treated as background. All scores are percentages.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import AMBIGUOUS, PseudoLabelSequence, ValidationError

OVERLAPS = (0.10, 0.25, 0.50)


@dataclass(frozen=True)
class Segment:
    label: int
    start: int
    end: int


def segments(labels: Sequence[int]) -> list[Segment]:
    """Collapse a full label sequence into runs of equal labels."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        return []
    change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [len(labels)]))
    return [Segment(int(labels[s]), int(s), int(e)) for s, e in zip(starts, ends)]


def _check(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValidationError(f"prediction length {len(pred)} != ground truth length {len(gt)}")
    return pred, gt


def frame_accuracy(pred, gt) -> float:
    pred, gt = _check(pred, gt)
    return 100.0 * np.count_nonzero(pred == gt) / len(gt)


def levenshtein(a: Sequence, b: Sequence) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def edit_score(pred, gt) -> float:
    pred, gt = _check(pred, gt)
    p = [s.label for s in segments(pred)]
    g = [s.label for s in segments(gt)]
    return max(0.0, 100.0 * (1.0 - levenshtein(p, g) / max(len(p), len(g))))


def match_segments(pred: Sequence[Segment], gt: Sequence[Segment], threshold: float) -> tuple[int, int, int]:
    """(tp, fp, fn): each predicted segment claims the best unmatched same-class ground-truth segment."""
    matched = [False] * len(gt)
    tp = fp = 0
    for p in pred:
        best, best_iou = -1, -1.0
        for j, g in enumerate(gt):
            if matched[j] or g.label != p.label:
                continue
            inter = max(0, min(p.end, g.end) - max(p.start, g.start))
            union = max(p.end, g.end) - min(p.start, g.start)
            iou = inter / union
            if iou > best_iou:
                best, best_iou = j, iou
        if best >= 0 and best_iou >= threshold:
            matched[best] = True
            tp += 1
        else:
            fp += 1
    return tp, fp, len(gt) - sum(matched)


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 100.0 * 2 * precision * recall / (precision + recall)


def f1_counts(pred, gt, threshold: float) -> tuple[int, int, int]:
    pred, gt = _check(pred, gt)
    return match_segments(segments(pred), segments(gt), threshold)


def f1_at_overlap(pred, gt, threshold: float) -> float:
    return f1_from_counts(*f1_counts(pred, gt, threshold))


def pseudo_label_quality(pl: PseudoLabelSequence, gt) -> tuple[float | None, float]:
    """(accuracy over labeled frames or None, label rate)."""
    labels, gt = _check(pl.labels, gt)
    mask = labels != AMBIGUOUS
    rate = 100.0 * np.count_nonzero(mask) / len(labels)
    if not mask.any():
        return None, rate
    return 100.0 * np.count_nonzero(labels[mask] == gt[mask]) / np.count_nonzero(mask), rate


@dataclass
class VideoScores:
    name: str
    f1: tuple[float, float, float]
    edit: float
    acc: float
    frames: int
    label_rate: float | None = None
    pl_accuracy: float | None = None


def score_video(name: str, pred, gt, pl: PseudoLabelSequence | None = None) -> VideoScores:
    f1 = tuple(f1_at_overlap(pred, gt, k) for k in OVERLAPS)
    scores = VideoScores(name, f1, edit_score(pred, gt), frame_accuracy(pred, gt), len(gt))
    if pl is not None:
        scores.pl_accuracy, scores.label_rate = pseudo_label_quality(pl, gt)
    return scores


@dataclass
class DatasetScores:
    f1: tuple[float, float, float]
    edit: float
    acc: float              # frame-pooled
    acc_video_mean: float
    label_rate: float | None
    pl_accuracy: float | None


def summarize(videos: list[VideoScores]) -> DatasetScores | None:
    """Unweighted video means for F1/Edit; accuracy both frame-pooled and video-averaged."""
    if not videos:
        return None
    frames = np.array([v.frames for v in videos], dtype=float)
    accs = np.array([v.acc for v in videos])
    f1 = tuple(float(np.mean([v.f1[k] for v in videos])) for k in range(len(OVERLAPS)))
    label_rate = pl_acc = None
    if all(v.label_rate is not None for v in videos):
        rates = np.array([v.label_rate for v in videos])
        labeled = rates * frames / 100.0
        label_rate = float(100.0 * labeled.sum() / frames.sum())
        if all(v.pl_accuracy is not None for v in videos):
            pl_acc = float(np.sum([v.pl_accuracy * n for v, n in zip(videos, labeled)]) / labeled.sum())
    return DatasetScores(f1, float(np.mean([v.edit for v in videos])),
                         float((accs * frames).sum() / frames.sum()), float(accs.mean()),
                         label_rate, pl_acc)
