import struct

import numpy as np
import pytest

from stampseg.core import AMBIGUOUS, FeatureSequence, TimestampAnnotation
from stampseg.io import (
    REPORT_COLUMNS,
    ClassTable,
    DatasetManifest,
    FormatError,
    VideoEntry,
    load_features,
    load_labels,
    load_manifest,
    load_timestamps,
    read_csv,
    save_features,
    save_labels,
    save_manifest,
    save_timestamps,
    write_report,
)
from stampseg.metrics import score_video, summarize

CLASSES = ClassTable(["pour", "stir", "wait"])


def test_feature_fixture_bytes(tmp_path):
    path = tmp_path / "a.tseg"
    save_features(path, FeatureSequence([[1.0, 2.0], [3.0, -0.5]]))
    expected = b"TSEG" + bytes([1]) + struct.pack("<II", 2, 2) + struct.pack("<4f", 1.0, 2.0, 3.0, -0.5)
    assert path.read_bytes() == expected


def test_feature_round_trip(tmp_path):
    x = np.random.default_rng(0).standard_normal((13, 5)).astype(np.float32)
    save_features(tmp_path / "f.tseg", FeatureSequence(x))
    np.testing.assert_array_equal(load_features(tmp_path / "f.tseg").data, x)


def test_feature_truncated_names_sizes(tmp_path):
    path = tmp_path / "f.tseg"
    save_features(path, FeatureSequence(np.zeros((4, 3))))
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(FormatError, match="expected 61 bytes .* got 57"):
        load_features(path)


def test_feature_bad_magic_and_short_header(tmp_path):
    (tmp_path / "m").write_bytes(b"NOPE" + bytes(9))
    with pytest.raises(FormatError, match="magic"):
        load_features(tmp_path / "m")
    (tmp_path / "s").write_bytes(b"TS")
    with pytest.raises(FormatError, match="header"):
        load_features(tmp_path / "s")


def test_labels_round_trip_with_ambiguous(tmp_path):
    labels = np.array([0, 0, AMBIGUOUS, 2, 1])
    save_labels(tmp_path / "l.txt", labels, CLASSES)
    assert (tmp_path / "l.txt").read_text() == "pour\npour\n-\nwait\nstir\n"
    np.testing.assert_array_equal(load_labels(tmp_path / "l.txt", CLASSES), labels)


def test_labels_crlf(tmp_path):
    (tmp_path / "l.txt").write_bytes(b"pour\r\nstir\r\n")
    assert load_labels(tmp_path / "l.txt", CLASSES).tolist() == [0, 1]


def test_labels_unknown_token_line(tmp_path):
    (tmp_path / "l.txt").write_text("pour\nstir\nboil\n")
    with pytest.raises(FormatError, match=r"l\.txt:3: unknown class 'boil'"):
        load_labels(tmp_path / "l.txt", CLASSES)


def test_labels_empty_file(tmp_path):
    (tmp_path / "l.txt").write_text("")
    with pytest.raises(FormatError, match="empty"):
        load_labels(tmp_path / "l.txt", CLASSES)


def test_timestamps_round_trip(tmp_path):
    ts = TimestampAnnotation([3, 10, 17], [1, 0, 2], 3)
    save_timestamps(tmp_path / "t.txt", ts, CLASSES)
    back = load_timestamps(tmp_path / "t.txt", CLASSES)
    assert back.frames.tolist() == [3, 10, 17] and back.classes.tolist() == [1, 0, 2]


def test_timestamps_malformed_line(tmp_path):
    (tmp_path / "t.txt").write_text("3 pour\nten stir\n")
    with pytest.raises(FormatError, match="t.txt:2"):
        load_timestamps(tmp_path / "t.txt", CLASSES)


def test_manifest_round_trip_relative(tmp_path):
    for name in ("f.tseg", "g.txt", "t.txt"):
        (tmp_path / name).write_text("")
    m = DatasetManifest(CLASSES, [VideoEntry("v1", tmp_path / "f.tseg", tmp_path / "g.txt", tmp_path / "t.txt"),
                                  VideoEntry("v2", tmp_path / "f.tseg", None, tmp_path / "t.txt")])
    save_manifest(tmp_path / "manifest.txt", m)
    text = (tmp_path / "manifest.txt").read_text()
    assert "video v1 f.tseg g.txt t.txt" in text and "video v2 f.tseg - t.txt" in text
    back = load_manifest(tmp_path / "manifest.txt")
    assert back.classes.names == CLASSES.names
    assert back.videos[1].ground_truth is None
    assert back.videos[0].features == tmp_path / "f.tseg"


def test_manifest_missing_file(tmp_path):
    (tmp_path / "manifest.txt").write_text("class pour\nvideo v1 nope.tseg - t.txt\n")
    with pytest.raises(FormatError, match="missing file"):
        load_manifest(tmp_path / "manifest.txt")


def test_empty_report_is_header_only(tmp_path):
    write_report(tmp_path / "r.csv", [], summarize([]))
    assert (tmp_path / "r.csv").read_text() == ",".join(REPORT_COLUMNS) + "\n"


def test_perfect_predictions_report(tmp_path):
    gt = np.array([0, 0, 1, 1, 1, 2])
    scores = [score_video("v", gt, gt)]
    write_report(tmp_path / "r.csv", scores, summarize(scores))
    rows = read_csv(tmp_path / "r.csv")
    assert [r["video"] for r in rows] == ["v", "summary"]
    for col in ("F1@10", "F1@25", "F1@50", "Edit", "Acc"):
        assert float(rows[1][col]) == 100.0
    assert float(rows[1]["Acc_video_mean"]) == 100.0
