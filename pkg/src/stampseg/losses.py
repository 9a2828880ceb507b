"""Training losses and their analytic gradients.

The probability-based losses take log-probabilities (rows of a log-softmax)
and return gradients with respect to the classifier logits; the clustering
loss works on hidden features and returns the gradient with respect to them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import AMBIGUOUS, PseudoLabelSequence, TimestampAnnotation, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossWeights:
    lam: float = 0.15
    beta: float = 0.075
    gamma: float = 0.15
    theta: float = 4.0
    smoothing_mode: str = "clamp"

    def __post_init__(self):
        for name in ("lam", "beta", "gamma", "theta"):
            if getattr(self, name) < 0:
                raise ValidationError(f"loss weight {name} must be >= 0")
        if self.smoothing_mode not in ("clamp", "max"):
            raise ValidationError(f"smoothing_mode must be 'clamp' or 'max', got {self.smoothing_mode!r}")


def logits_grad(log_probs: np.ndarray, grad_log_probs: np.ndarray) -> np.ndarray:
    """Pull a gradient on log-softmax outputs back to the logits."""
    probs = np.exp(log_probs)
    return grad_log_probs - probs * grad_log_probs.sum(axis=1, keepdims=True)


def _labels(pl: PseudoLabelSequence | np.ndarray) -> np.ndarray:
    return pl.labels if isinstance(pl, PseudoLabelSequence) else np.asarray(pl)


def classification_loss(log_probs: np.ndarray, pl: PseudoLabelSequence | np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over labeled frames; ambiguous frames are skipped."""
    labels = _labels(pl)
    if len(labels) != len(log_probs):
        raise ValidationError(f"{len(labels)} labels for {len(log_probs)} frames")
    idx = np.flatnonzero(labels != AMBIGUOUS)
    if len(idx) == 0:
        raise ValidationError("classification loss needs at least one labeled frame")
    cls = labels[idx]
    value = -log_probs[idx, cls].sum() / len(idx)
    grad = np.zeros_like(log_probs)
    grad[idx] = np.exp(log_probs[idx])
    grad[idx, cls] -= 1.0
    return float(value), grad / len(idx)


def smoothing_loss(log_probs: np.ndarray, theta: float = 4.0, mode: str = "clamp") -> tuple[float, np.ndarray]:
    """Truncated MSE between consecutive log-probabilities.

    ``mode="clamp"`` squares ``min(|delta|, theta)``; ``mode="max"`` squares
    ``max(|delta|, theta)``. The previous frame is treated
    as a constant, and the sum is divided by ``T * C``.
    """
    T, C = log_probs.shape
    if T < 2:
        raise ValidationError("smoothing loss needs T >= 2")
    delta = log_probs[1:] - log_probs[:-1]
    mag = np.abs(delta)
    if mode == "clamp":
        live = mag < theta
        value = np.minimum(mag, theta)
    elif mode == "max":
        live = mag > theta
        value = np.maximum(mag, theta)
    else:
        raise ValidationError(f"unknown smoothing mode {mode!r}")
    grad_lp = np.zeros_like(log_probs)
    grad_lp[1:] = np.where(live, 2.0 * delta, 0.0) / (T * C)
    return float((value ** 2).sum() / (T * C)), logits_grad(log_probs, grad_lp)


def confidence_loss(log_probs: np.ndarray, ts: TimestampAnnotation) -> tuple[float, np.ndarray]:
    """Penalise probability of each stamp's class rising away from or falling toward its timestamp."""
    T = len(log_probs)
    if ts.N < 2:
        log.warning("confidence loss needs at least two timestamps; using 0")
        return 0.0, np.zeros_like(log_probs)
    tau = ts.frames
    norm = 2.0 * (tau[-1] - tau[0])
    grad_lp = np.zeros_like(log_probs)
    total = 0.0
    for n, (t_n, c) in enumerate(zip(tau, ts.classes)):
        lo = tau[n - 1] if n > 0 else 0
        hi = tau[n + 1] if n + 1 < ts.N else T - 1
        t = np.arange(max(lo, 1), hi + 1)
        step = log_probs[t, c] - log_probs[t - 1, c]
        sign = np.where(t >= t_n, 1.0, -1.0)
        active = sign * step > 0
        total += (sign * step)[active].sum()
        np.add.at(grad_lp[:, c], t[active], sign[active])
        np.add.at(grad_lp[:, c], t[active] - 1, -sign[active])
    return float(total / norm), logits_grad(log_probs, grad_lp / norm)


def clustering_loss(hidden: np.ndarray, pl: PseudoLabelSequence) -> tuple[float, np.ndarray]:
    """Mean squared distance of labeled frames to their segment mean (mean held constant)."""
    if pl.T != len(hidden):
        raise ValidationError(f"{pl.T} labels for {len(hidden)} frames")
    segs = pl.segments
    count = sum(r - l for l, r, _ in segs)
    if count == 0:
        raise ValidationError("clustering loss needs at least one labeled frame")
    grad = np.zeros_like(hidden)
    value = 0.0
    for l, r, _ in segs:
        diff = hidden[l:r] - hidden[l:r].mean(axis=0)
        value += float((diff ** 2).sum())
        grad[l:r] = 2.0 * diff
    return value / count, grad / count


@dataclass
class LossBreakdown:
    total: float
    cls: float
    smo: float
    conf: float
    clu: float
    grad_logits: np.ndarray
    grad_hidden: np.ndarray


def total_loss(log_probs: np.ndarray, hidden: np.ndarray, pl: PseudoLabelSequence,
               ts: TimestampAnnotation, w: LossWeights,
               cls_labels: PseudoLabelSequence | None = None) -> LossBreakdown:
    """Weighted sum ``cls + lam*smo + beta*conf + gamma*clu``.

    ``cls_labels`` overrides the labels used by the classification term (the
    warm-up phase supervises timestamp frames only); components whose weight
    is zero are not evaluated.
    """
    v_cls, g_cls = classification_loss(log_probs, cls_labels if cls_labels is not None else pl)
    grad_logits = g_cls
    v_smo = v_conf = v_clu = 0.0
    grad_hidden = np.zeros_like(hidden)
    if w.lam:
        v_smo, g = smoothing_loss(log_probs, w.theta, w.smoothing_mode)
        grad_logits = grad_logits + w.lam * g
    if w.beta:
        v_conf, g = confidence_loss(log_probs, ts)
        grad_logits = grad_logits + w.beta * g
    if w.gamma:
        v_clu, g = clustering_loss(hidden, pl)
        grad_hidden = w.gamma * g
    total = v_cls + w.lam * v_smo + w.beta * v_conf + w.gamma * v_clu
    return LossBreakdown(total, v_cls, v_smo, v_conf, v_clu, grad_logits, grad_hidden)
