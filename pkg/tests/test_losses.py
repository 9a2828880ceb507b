import numpy as np
import pytest
from scipy.special import log_softmax

from oracles import max_rel_error, numeric_grad
from stampseg.core import AMBIGUOUS, PseudoLabelSequence, TimestampAnnotation, ValidationError
from stampseg.losses import (
    LossWeights,
    classification_loss,
    clustering_loss,
    confidence_loss,
    smoothing_loss,
    total_loss,
)

Q = AMBIGUOUS


def test_cross_entropy_hand_value():
    lp = np.log(np.array([[0.7, 0.3], [0.5, 0.5], [0.2, 0.8]]))
    value, _ = classification_loss(lp, np.array([0, Q, 1]))
    assert value == pytest.approx(-(np.log(0.7) + np.log(0.8)) / 2, abs=1e-12)


def test_cross_entropy_uniform_is_log_c():
    lp = np.log(np.full((4, 2), 0.5))
    assert classification_loss(lp, np.array([0, 1, 1, 0]))[0] == pytest.approx(np.log(2))


def test_cross_entropy_needs_labels():
    with pytest.raises(ValidationError):
        classification_loss(np.zeros((3, 2)), np.array([Q, Q, Q]))


def test_smoothing_clamped_jump():
    lp = np.zeros((4, 2))
    lp[2:, 0] = 8.0
    value, grad = smoothing_loss(lp, theta=4.0)
    assert value == pytest.approx(16 / 8)
    # the clamped difference carries no gradient
    assert np.all(grad == 0)


def test_smoothing_max_mode_floors():
    value, _ = smoothing_loss(np.zeros((3, 2)), theta=1.0, mode="max")
    assert value == pytest.approx(4 * 1.0 / 6)


def test_confidence_hand_value():
    g = 0.3
    rise = np.zeros((6, 2))
    rise[2:, 0] = g
    fall = np.zeros((6, 2))
    fall[:2, 0] = g
    # class 0 rises by g after its own stamp at 1: violation g, normalised by 2 * (4 - 1)
    assert confidence_loss(rise, TimestampAnnotation([1, 4], [0, 1], 2))[0] == pytest.approx(g / 6)
    # same rise before the class-0 stamp at 4 is allowed
    assert confidence_loss(rise, TimestampAnnotation([1, 4], [1, 0], 2))[0] == pytest.approx(0.0)
    # a fall before the class-0 stamp is penalised
    assert confidence_loss(fall, TimestampAnnotation([1, 4], [1, 0], 2))[0] == pytest.approx(g / 6)


def test_confidence_single_stamp_is_zero():
    value, grad = confidence_loss(np.zeros((5, 2)), TimestampAnnotation([2], [0], 2))
    assert value == 0.0 and np.all(grad == 0)


def test_clustering_hand_value():
    hidden = np.array([[0.0], [2.0]])
    value, _ = clustering_loss(hidden, PseudoLabelSequence([0, 0]))
    assert value == pytest.approx(1.0)


def test_clustering_ignores_ambiguous_frames():
    hidden = np.array([[0.0], [100.0], [2.0]])
    pl = PseudoLabelSequence([0, Q, 1])
    value, grad = clustering_loss(hidden, pl)
    assert value == 0.0 and grad[1, 0] == 0.0


def _case(seed, T=12, C=3, D=4):
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((T, C)) * 2
    hidden = rng.standard_normal((T, D))
    ts = TimestampAnnotation([2, 6, 10], [0, 1, 2], C)
    pl = PseudoLabelSequence([0] * 4 + [Q] + [1] * 4 + [2] * 3)
    return logits, hidden, ts, pl


@pytest.mark.parametrize("seed", range(3))
def test_losses_non_negative(seed):
    logits, hidden, ts, pl = _case(seed)
    lp = log_softmax(logits, axis=1)
    assert classification_loss(lp, pl)[0] >= 0
    assert smoothing_loss(lp)[0] >= 0
    assert confidence_loss(lp, ts)[0] >= 0
    assert clustering_loss(hidden, pl)[0] >= 0


def test_total_is_weighted_sum():
    logits, hidden, ts, pl = _case(1)
    lp = log_softmax(logits, axis=1)
    w = LossWeights(lam=0.3, beta=0.2, gamma=0.5)
    out = total_loss(lp, hidden, pl, ts, w)
    expected = (classification_loss(lp, pl)[0] + 0.3 * smoothing_loss(lp)[0]
                + 0.2 * confidence_loss(lp, ts)[0] + 0.5 * clustering_loss(hidden, pl)[0])
    assert out.total == pytest.approx(expected, abs=1e-12)


def test_negative_weight_rejected():
    with pytest.raises(ValidationError):
        LossWeights(lam=-1.0)


@pytest.mark.parametrize("seed", range(3))
def test_gradients_match_finite_differences(seed):
    logits, hidden, ts, pl = _case(seed)
    base_lp = log_softmax(logits, axis=1)
    base_mean = {(l, r): hidden[l:r].mean(0) for l, r, _ in pl.segments}
    count = pl.num_labeled

    def smo(p):
        lp = log_softmax(p["z"], axis=1)
        d = np.minimum(np.abs(lp[1:] - base_lp[:-1]), 4.0)
        return float((d ** 2).sum() / lp.size)

    def clu(p):
        h = p["h"]
        return sum(float(((h[l:r] - base_mean[l, r]) ** 2).sum()) for l, r in base_mean) / count

    checks = [
        (lambda p: classification_loss(log_softmax(p["z"], axis=1), pl)[0], classification_loss(base_lp, pl)[1], "z"),
        (smo, smoothing_loss(base_lp)[1], "z"),
        (lambda p: confidence_loss(log_softmax(p["z"], axis=1), ts)[0], confidence_loss(base_lp, ts)[1], "z"),
        (clu, clustering_loss(hidden, pl)[1], "h"),
    ]
    for fn, analytic, key in checks:
        start = {"z": logits.copy()} if key == "z" else {"h": hidden.copy()}
        assert max_rel_error({key: analytic}, numeric_grad(fn, start)) < 1e-4
