import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_instance, two_block
from stampseg.core import AMBIGUOUS, PseudoLabelSequence, ValidationError, validate_pseudo_labels
from stampseg.ensemble import DEFAULT_SPEC, EnsembleSpec, Member, ensemble, run_ple, run_ple_members

A, B = 0, 1


def pl(*labels):
    return PseudoLabelSequence(list(labels))


def test_identical_inputs_idempotent():
    s = pl(A, A, B, B)
    out = ensemble([s, s, s])
    assert out.labels.tolist() == s.labels.tolist()
    assert out.label_rate == 100.0


def test_single_disagreement_becomes_ambiguous():
    out = ensemble([pl(A, A, B, B), pl(A, A, B, B), pl(A, A, A, B)])
    assert out.labels.tolist() == [A, A, AMBIGUOUS, B]


def test_rejects_length_mismatch_and_ambiguous_inputs():
    with pytest.raises(ValidationError, match="length"):
        ensemble([pl(A, B), pl(A, B, B)])
    with pytest.raises(ValidationError, match="ambiguous"):
        ensemble([pl(A, AMBIGUOUS, B)])
    with pytest.raises(ValidationError):
        ensemble([])


def test_single_member_spec_returns_member_sequence():
    rng = np.random.default_rng(0)
    f, ts = random_instance(rng, 40, 3, 4)
    spec = EnsembleSpec((Member("agnes"),))
    full, members = run_ple_members(f, ts, spec)
    assert full.is_full
    assert full.labels.tolist() == members[0].labels.tolist()


def test_two_block_video_full_agreement():
    f, ts = two_block(20, 20)
    out = run_ple(f, ts)
    assert out.label_rate == 100.0


def test_views_and_parse():
    spec = EnsembleSpec.parse("energy@rgb,agnes@flow,kmedoids", "rgb:0:2,flow:2:4")
    assert [str(m) for m in spec.members] == ["energy@rgb", "agnes@flow", "kmedoids"]
    rng = np.random.default_rng(1)
    f, ts = random_instance(rng, 30, 4, 3)
    out, members = run_ple_members(f, ts, spec)
    assert len(members) == 3
    assert validate_pseudo_labels(out, ts) is None
    with pytest.raises(ValidationError):
        EnsembleSpec.parse("energy@missing")
    with pytest.raises(ValidationError):
        EnsembleSpec.parse("viterbi")
    with pytest.raises(ValidationError):
        EnsembleSpec.parse("energy@v", "v:0:9").feature_view(f, "v")


def test_six_member_spec_runs():
    spec = EnsembleSpec.parse(",".join(f"{a}@{v}" for v in ("rgb", "flow") for a in ("energy", "kmedoids", "agnes")),
                              "rgb:0:2,flow:2:4")
    rng = np.random.default_rng(2)
    f, ts = random_instance(rng, 50, 4, 5)
    out, members = run_ple_members(f, ts, spec)
    assert len(members) == 6
    assert validate_pseudo_labels(out, ts) is None


@given(st.integers(0, 100_000))
@settings(max_examples=40, deadline=None)
def test_ensemble_properties(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(2, 40))
    N = int(rng.integers(1, min(T, 5) + 1))
    f, ts = random_instance(rng, T, 2, N)
    out, members = run_ple_members(f, ts, DEFAULT_SPEC)
    assert validate_pseudo_labels(out, ts) is None
    stack = np.stack([m.labels for m in members])
    labeled = out.labels != AMBIGUOUS
    # every labeled frame agrees across all members
    assert np.all(stack[:, labeled] == out.labels[labeled])
    assert labeled[0] and labeled[-1]
    # symmetric
    assert ensemble(members[::-1]).labels.tolist() == out.labels.tolist()
    # monotone: removing a member never removes labels
    for k in range(len(members)):
        fewer = ensemble(members[:k] + members[k + 1:]) if len(members) > 1 else out
        assert np.all(fewer.labels[labeled] != AMBIGUOUS)
