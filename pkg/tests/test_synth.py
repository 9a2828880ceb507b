import filecmp

import numpy as np
import pytest

from stampseg.boundaries import ALGORITHMS
from stampseg.core import ValidationError, partition_to_labels, validate_pseudo_labels
from stampseg.io import load_manifest
from stampseg.metrics import segments
from stampseg.synth import SynthConfig, derive_timestamps, generate, synth_generate

SMALL = SynthConfig(videos=4, t_min=80, t_max=120, n_min=3, n_max=6, dim=5, classes=4, min_len=6, seed=3)


def test_generated_videos_are_valid():
    videos, classes = generate(SMALL)
    assert len(videos) == 4 and len(classes) == 4
    for v in videos:
        T = v.features.T
        assert SMALL.t_min <= T <= SMALL.t_max
        segs = segments(v.ground_truth)
        assert SMALL.n_min <= len(segs) <= SMALL.n_max
        assert min(s.end - s.start for s in segs) >= SMALL.min_len
        assert all(a.label != b.label for a, b in zip(segs, segs[1:]))
        assert v.timestamps.N == len(segs)


def test_rerun_is_byte_identical(tmp_path):
    a = synth_generate(SMALL, tmp_path / "a").parent
    b = synth_generate(SMALL, tmp_path / "b").parent
    for sub in ("features", "groundTruth", "timestamps"):
        cmp = filecmp.dircmp(a / sub, b / sub)
        assert not cmp.left_only and not cmp.right_only
        _, mismatch, errors = filecmp.cmpfiles(a / sub, b / sub, cmp.common_files, shallow=False)
        assert not mismatch and not errors
    assert (a / "manifest.txt").read_text() == (b / "manifest.txt").read_text()
    assert len(load_manifest(a / "manifest.txt").videos) == 4


def test_seed_changes_data():
    a, _ = generate(SMALL)
    b, _ = generate(SynthConfig(**{**SMALL.__dict__, "seed": 4}))
    assert not np.array_equal(a[0].features.data[:10], b[0].features.data[:10])


@pytest.mark.parametrize("name", sorted(ALGORITHMS))
def test_noise_free_recovers_ground_truth(name):
    videos, _ = generate(SynthConfig(**{**SMALL.__dict__, "sigma": 0.0}))
    for v in videos:
        pl = partition_to_labels(ALGORITHMS[name](v.features, v.timestamps), v.timestamps)
        assert np.array_equal(pl.labels, v.ground_truth)
        assert validate_pseudo_labels(pl, v.timestamps) is None


def test_middle_timestamps():
    ts = derive_timestamps([0, 0, 1, 1], 2)
    assert ts.frames.tolist() == [0, 2] and ts.classes.tolist() == [0, 1]
    assert derive_timestamps([0, 0, 0, 1, 1, 1], 2).frames.tolist() == [1, 4]


def test_random_timestamps_reproducible_and_inside():
    gt = np.repeat([2, 0, 1], [5, 7, 4])
    a = derive_timestamps(gt, 3, "random", np.random.default_rng(0))
    b = derive_timestamps(gt, 3, "random", np.random.default_rng(0))
    assert a.frames.tolist() == b.frames.tolist()
    assert 0 <= a.frames[0] < 5 <= a.frames[1] < 12 <= a.frames[2] < 16
    with pytest.raises(ValidationError):
        derive_timestamps(gt, 3, "random")


@pytest.mark.parametrize("kw", [dict(min_len=50), dict(t_min=0), dict(n_min=7), dict(classes=1),
                                dict(sigma=-1.0), dict(timestamp_mode="end")])
def test_invalid_configs(kw):
    with pytest.raises(ValidationError):
        SynthConfig(**{**SMALL.__dict__, **kw})
