"""File formats.

Features (``.tseg``)::

    b"TSEG"  magic
    u8       version (1)
    u32 LE   T
    u32 LE   D
    T*D float32 LE, frame-major

Labels: UTF-8 text, one class name per line, ``-`` for an ambiguous frame.
Timestamps: UTF-8 text, one ``<frame> <class name>`` pair per line.
Manifest: line-oriented text, paths relative to the manifest's directory::

    # stampseg manifest v1
    class <name>                                  (one per class, in id order)
    video <id> <features> <ground truth or -> <timestamps>
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import AMBIGUOUS, FeatureSequence, PseudoLabelSequence, TimestampAnnotation, ValidationError

FEATURE_MAGIC = b"TSEG"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4sBII")
AMBIGUOUS_TOKEN = "-"


class FormatError(ValidationError):
    pass


def save_features(path: str | Path, f: FeatureSequence) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, f.T, f.D))
        fh.write(np.ascontiguousarray(f.data, dtype="<f4").tobytes())


def load_features(path: str | Path) -> FeatureSequence:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header, expected {_HEADER.size} bytes, got {len(raw)}")
    magic, version, T, D = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * T * D
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for T={T}, D={D}, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(T, D)
    if not np.all(np.isfinite(data)):
        bad = int(np.argwhere(~np.isfinite(data))[0, 0])
        raise FormatError(f"{path}: non-finite value at frame {bad}")
    return FeatureSequence(data)


def _lines(path: str | Path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    return text.replace("\r\n", "\n").replace("\r", "\n").splitlines()


@dataclass
class ClassTable:
    names: list[str]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValidationError("duplicate class names")
        self._ids = {n: i for i, n in enumerate(self.names)}

    def __len__(self):
        return len(self.names)

    def id(self, name: str) -> int:
        return self._ids[name]

    def __contains__(self, name: str) -> bool:
        return name in self._ids


def load_labels(path: str | Path, classes: ClassTable) -> np.ndarray:
    """Class ids per frame, ``AMBIGUOUS`` for ``-`` lines."""
    lines = _lines(path)
    if not lines:
        raise FormatError(f"{path}: empty label file")
    out = np.empty(len(lines), dtype=np.int64)
    for i, tok in enumerate(lines):
        tok = tok.strip()
        if tok == AMBIGUOUS_TOKEN:
            out[i] = AMBIGUOUS
        elif tok in classes:
            out[i] = classes.id(tok)
        else:
            raise FormatError(f"{path}:{i + 1}: unknown class {tok!r}")
    return out


def save_labels(path: str | Path, labels: np.ndarray | PseudoLabelSequence, classes: ClassTable) -> None:
    if isinstance(labels, PseudoLabelSequence):
        labels = labels.labels
    text = "".join((AMBIGUOUS_TOKEN if c == AMBIGUOUS else classes.names[c]) + "\n" for c in labels)
    Path(path).write_text(text, encoding="utf-8")


def load_timestamps(path: str | Path, classes: ClassTable) -> TimestampAnnotation:
    pairs = []
    for i, line in enumerate(_lines(path)):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2 or not parts[0].isdigit():
            raise FormatError(f"{path}:{i + 1}: expected '<frame> <class>'")
        if parts[1] not in classes:
            raise FormatError(f"{path}:{i + 1}: unknown class {parts[1]!r}")
        pairs.append((int(parts[0]), classes.id(parts[1])))
    return TimestampAnnotation.from_pairs(pairs, len(classes))


def save_timestamps(path: str | Path, ts: TimestampAnnotation, classes: ClassTable) -> None:
    Path(path).write_text("".join(f"{t} {classes.names[c]}\n" for t, c in zip(ts.frames, ts.classes)),
                          encoding="utf-8")


@dataclass
class VideoEntry:
    name: str
    features: Path
    ground_truth: Path | None
    timestamps: Path


@dataclass
class DatasetManifest:
    classes: ClassTable
    videos: list[VideoEntry] = field(default_factory=list)
    root: Path = Path(".")


MANIFEST_HEADER = "# stampseg manifest v1"


def save_manifest(path: str | Path, manifest: DatasetManifest) -> None:
    path = Path(path)
    root = path.parent

    def rel(p: Path | None) -> str:
        return "-" if p is None else Path(p).resolve().relative_to(root.resolve()).as_posix()

    lines = [MANIFEST_HEADER]
    lines += [f"class {n}" for n in manifest.classes.names]
    lines += [f"video {v.name} {rel(v.features)} {rel(v.ground_truth)} {rel(v.timestamps)}"
              for v in manifest.videos]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    root = path.parent
    names: list[str] = []
    videos: list[VideoEntry] = []
    for i, line in enumerate(_lines(path)):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        where = f"{path}:{i + 1}"
        if parts[0] == "class" and len(parts) == 2:
            names.append(parts[1])
        elif parts[0] == "video" and len(parts) == 5:
            _, name, feat, gt, stamps = parts
            entry = VideoEntry(name, root / feat, None if gt == "-" else root / gt, root / stamps)
            for p in (entry.features, entry.ground_truth, entry.timestamps):
                if p is not None and not p.exists():
                    raise FormatError(f"{where}: missing file {p}")
            videos.append(entry)
        else:
            raise FormatError(f"{where}: unrecognised manifest line")
    return DatasetManifest(ClassTable(names), videos, root)


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.4f}"


REPORT_COLUMNS = ["video", "F1@10", "F1@25", "F1@50", "Edit", "Acc", "label_rate", "pl_accuracy", "Acc_video_mean"]
HISTORY_COLUMNS = ["epoch", "phase", "loss_total", "loss_cls", "loss_smo", "loss_conf", "loss_clu",
                   "label_rate", "pl_accuracy"]


def write_report(path: str | Path, videos: Sequence, summary=None) -> None:
    """Per-video metric rows plus a ``summary`` row (Acc frame-pooled, Acc_video_mean averaged)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for v in videos:
            w.writerow([v.name, *map(_fmt, v.f1), _fmt(v.edit), _fmt(v.acc),
                        _fmt(v.label_rate), _fmt(v.pl_accuracy), ""])
        if summary is not None:
            w.writerow(["summary", *map(_fmt, summary.f1), _fmt(summary.edit), _fmt(summary.acc),
                        _fmt(summary.label_rate), _fmt(summary.pl_accuracy), _fmt(summary.acc_video_mean)])


def write_history(path: str | Path, history: Sequence) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for r in history:
            w.writerow([r.epoch, r.phase, *(f"{x:.6f}" for x in (r.loss_total, r.loss_cls, r.loss_smo,
                                                                 r.loss_conf, r.loss_clu)),
                        _fmt(r.label_rate), _fmt(r.pl_accuracy)])


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
