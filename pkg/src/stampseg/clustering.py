"""Iterative clustering: propagate pseudo-labels into ambiguous gaps while training the encoder."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .boundaries import pair_energy
from .core import (
    AMBIGUOUS,
    FeatureSequence,
    PseudoLabelSequence,
    TimestampAnnotation,
    ValidationError,
    check_pseudo_labels,
)
from .encoder import Adam, EncoderConfig, Params, backward, forward_cache, init_params
from .losses import LossWeights, total_loss
from .metrics import pseudo_label_quality

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


def compute_centers(hidden: np.ndarray, pl: PseudoLabelSequence) -> np.ndarray:
    """N x D_h matrix of mean hidden features over each labeled run."""
    if pl.T != len(hidden):
        raise ValidationError(f"{pl.T} labels for {len(hidden)} hidden rows")
    segs = pl.segments
    if not segs:
        raise ValidationError("no labeled segments")
    return np.stack([hidden[l:r].mean(axis=0) for l, r, _ in segs])


def propagate(hidden: np.ndarray, pl: PseudoLabelSequence, centers: np.ndarray) -> PseudoLabelSequence:
    """Grow each labeled run into the neighbouring ambiguous gap by nearest-center assignment.

    Left to right, frames strictly closer to the left center join the left run;
    then right to left, frames strictly closer to the right center join the
    right run. Ties stay ambiguous and centers are not updated here.
    """
    segs = pl.segments
    if len(centers) != len(segs):
        raise ValidationError(f"{len(centers)} centers for {len(segs)} segments")
    left = [s[0] for s in segs]
    right = [s[1] for s in segs]
    for n in range(len(segs) - 1):
        m_left, m_right = centers[n], centers[n + 1]
        while right[n] < left[n + 1]:
            h = hidden[right[n]]
            if np.linalg.norm(h - m_left) < np.linalg.norm(h - m_right):
                right[n] += 1
            else:
                break
        while left[n + 1] > right[n]:
            h = hidden[left[n + 1] - 1]
            if np.linalg.norm(h - m_right) < np.linalg.norm(h - m_left):
                left[n + 1] -= 1
            else:
                break
    labels = np.full(pl.T, AMBIGUOUS, dtype=np.int64)
    for (_, _, c), l, r in zip(segs, left, right):
        labels[l:r] = c
    return PseudoLabelSequence(labels)


def fill_by_energy(hidden: np.ndarray, pl: PseudoLabelSequence) -> PseudoLabelSequence:
    """Close every gap at the two-sided energy minimum of the hidden features.

    Baseline used to compare against :func:`propagate`; existing labels are kept.
    """
    segs = pl.segments
    labels = pl.labels.copy()
    for (l0, r0, c0), (l1, r1, c1) in zip(segs, segs[1:]):
        if r0 == l1:
            continue
        # window spans both runs; boundary restricted to the gap [r0, l1]
        energy = pair_energy(hidden[l0:r1])
        ks = np.arange(r0 - l0, l1 - l0 + 1)
        b = l0 + int(ks[np.argmin(energy[ks - 1])])
        labels[r0:b] = c0
        labels[b:l1] = c1
    return PseudoLabelSequence(labels)


@dataclass
class Video:
    name: str
    features: FeatureSequence
    timestamps: TimestampAnnotation
    pseudo_labels: PseudoLabelSequence
    ground_truth: np.ndarray | None = None

    def __post_init__(self):
        self.timestamps.check_length(self.features.T)
        if self.pseudo_labels.T != self.features.T:
            raise ValidationError(f"{self.name}: pseudo-labels length {self.pseudo_labels.T} != T={self.features.T}")
        check_pseudo_labels(self.pseudo_labels, self.timestamps)

    def timestamp_labels(self) -> PseudoLabelSequence:
        labels = np.full(self.features.T, AMBIGUOUS, dtype=np.int64)
        labels[self.timestamps.frames] = self.timestamps.classes
        return PseudoLabelSequence(labels)


@dataclass
class TrainSchedule:
    warmup_epochs: int = 50
    ic_epochs: int = 20
    lr: float = 5e-4
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    propagation: str = "clustering"

    def __post_init__(self):
        if self.warmup_epochs < 0 or self.ic_epochs < 0:
            raise ValidationError("epoch counts must be >= 0")
        if self.propagation not in ("clustering", "energy"):
            raise ValidationError(f"unknown propagation {self.propagation!r}")


@dataclass
class EpochRecord:
    epoch: int
    phase: str
    loss_total: float
    loss_cls: float
    loss_smo: float
    loss_conf: float
    loss_clu: float
    label_rate: float
    pl_accuracy: float | None
    labeled_counts: list[int]


@dataclass
class TrainResult:
    params: Params
    config: EncoderConfig
    history: list[EpochRecord]
    pseudo_labels: dict[str, PseudoLabelSequence]


def _pooled_quality(videos: list[Video], pls: list[PseudoLabelSequence]) -> tuple[float, float | None]:
    labeled = sum(p.num_labeled for p in pls)
    total = sum(p.T for p in pls)
    if any(v.ground_truth is None for v in videos) or labeled == 0:
        return 100.0 * labeled / total, None
    correct = 0
    for v, p in zip(videos, pls):
        acc, _ = pseudo_label_quality(p, v.ground_truth)
        correct += acc * p.num_labeled / 100.0
    return 100.0 * labeled / total, 100.0 * correct / labeled


def train_ic(videos: list[Video], schedule: TrainSchedule, cfg: EncoderConfig,
             params: Params | None = None,
             on_epoch: Callable[[int, list[PseudoLabelSequence]], None] | None = None) -> TrainResult:
    """Warm up on timestamps only, then run ``ic_epochs`` of propagate-and-train.

    ``on_epoch(epoch, pseudo_labels)`` is called after each epoch is recorded.
    """
    if not videos:
        raise ValidationError("no videos to train on")
    params = init_params(cfg) if params is None else {k: v.copy() for k, v in params.items()}
    opt = Adam(schedule.lr)
    rng = np.random.default_rng(schedule.seed)
    w = schedule.weights
    warm_w = LossWeights(w.lam, w.beta, 0.0, w.theta, w.smoothing_mode)
    stamp_pl = [v.timestamp_labels() for v in videos]
    pls = [v.pseudo_labels for v in videos]
    history: list[EpochRecord] = []

    def run_epoch(epoch: int, phase: str, weights: LossWeights) -> np.ndarray:
        sums = np.zeros(5)
        for i in rng.permutation(len(videos)):
            v = videos[i]
            cache = forward_cache(params, cfg, v.features)
            if phase == "warmup":
                res = total_loss(cache.log_probs, cache.hidden, stamp_pl[i], v.timestamps, weights)
            else:
                res = total_loss(cache.log_probs, cache.hidden, pls[i], v.timestamps, weights)
            if not np.isfinite(res.total):
                raise TrainingError(f"non-finite loss at epoch {epoch} ({phase}) on video {v.name}")
            grads = backward(params, cfg, cache, res.grad_hidden, res.grad_logits)
            try:
                opt.step(params, grads)
            except FloatingPointError as exc:
                raise TrainingError(f"epoch {epoch} ({phase}), video {v.name}: {exc}") from exc
            sums += (res.total, res.cls, res.smo, res.conf, res.clu)
        return sums / len(videos)

    def record(epoch: int, phase: str, losses: np.ndarray) -> None:
        rate, acc = _pooled_quality(videos, pls)
        history.append(EpochRecord(epoch, phase, *map(float, losses), rate, acc,
                                   [p.num_labeled for p in pls]))
        log.info("epoch %d %s loss %.4f label rate %.2f", epoch, phase, losses[0], rate)
        if on_epoch is not None:
            on_epoch(epoch, list(pls))

    for epoch in range(1, schedule.warmup_epochs + 1):
        record(epoch, "warmup", run_epoch(epoch, "warmup", warm_w))

    for k in range(1, schedule.ic_epochs + 1):
        epoch = schedule.warmup_epochs + k
        for i, v in enumerate(videos):
            hidden = forward_cache(params, cfg, v.features).hidden
            if schedule.propagation == "clustering":
                pls[i] = propagate(hidden, pls[i], compute_centers(hidden, pls[i]))
            else:
                pls[i] = fill_by_energy(hidden, pls[i])
        record(epoch, "ic", run_epoch(epoch, "ic", w))

    return TrainResult(params, cfg, history, {v.name: p for v, p in zip(videos, pls)})


def predict(params: Params, cfg: EncoderConfig, f: FeatureSequence) -> np.ndarray:
    """Frame-wise argmax class ids."""
    return np.argmax(forward_cache(params, cfg, f).logits, axis=1)
