"""Command-line entry point: ``stampseg {synth,ple,train,eval,report}``.

Every command reads the same flat config. Flags mirror config keys
(``--warmup-epochs 10`` sets ``warmup_epochs``) and override the file.
``STAMPSEG_THREADS`` sets how many videos are processed concurrently.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

from .clustering import TrainingError, Video, predict, train_ic
from .config import FIELD_TYPES, RunConfig, load_config
from .core import PseudoLabelSequence, ValidationError, check_pseudo_labels
from .encoder import load_checkpoint, save_checkpoint
from .ensemble import run_ple_members
from .io import (
    DatasetManifest,
    load_features,
    load_labels,
    load_manifest,
    load_timestamps,
    save_labels,
    write_history,
    write_report,
)
from .metrics import pseudo_label_quality, score_video, summarize
from .synth import synth_generate

log = logging.getLogger("stampseg")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("STAMPSEG_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    items = list(items)
    n = _threads()
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(fn, items))


def _load_video_inputs(manifest: DatasetManifest):
    out = []
    for e in manifest.videos:
        f = load_features(e.features)
        ts = load_timestamps(e.timestamps, manifest.classes)
        ts.check_length(f.T)
        gt = None
        if e.ground_truth is not None:
            gt = load_labels(e.ground_truth, manifest.classes)
            if len(gt) != f.T:
                raise ValidationError(f"{e.ground_truth}: {len(gt)} labels for {f.T} frames")
        out.append((e.name, f, ts, gt))
    return out


def cmd_synth(cfg: RunConfig) -> int:
    out = cfg.manifest_path.parent
    path = synth_generate(cfg.synth(), out)
    print(path)
    return 0


def _quality_rows(names, gts, members, ensembles):
    """Pooled (Acc, Label) per constituent and for the ensemble."""
    rows = []
    for k, name in enumerate(names + ["ensemble"]):
        seqs = ensembles if name == "ensemble" else [m[k] for m in members]
        labeled = sum(s.num_labeled for s in seqs)
        total = sum(s.T for s in seqs)
        correct = sum(pseudo_label_quality(s, g)[0] * s.num_labeled / 100.0 for s, g in zip(seqs, gts))
        rows.append((name, 100.0 * correct / labeled, 100.0 * labeled / total))
    return rows


def cmd_ple(cfg: RunConfig) -> int:
    manifest = load_manifest(cfg.manifest_path)
    spec = cfg.ensemble_spec()
    inputs = _load_video_inputs(manifest)
    results = _map(lambda v: run_ple_members(v[1], v[2], spec), inputs)
    cache = cfg.out_dir / "ple"
    cache.mkdir(parents=True, exist_ok=True)
    for (name, *_), (ens, _) in zip(inputs, results):
        save_labels(cache / f"{name}.txt", ens, manifest.classes)
    if inputs and all(v[3] is not None for v in inputs):
        rows = _quality_rows([str(m) for m in spec.members], [v[3] for v in inputs],
                             [r[1] for r in results], [r[0] for r in results])
        with open(cfg.out_dir / "ple_quality.csv", "w", encoding="utf-8") as fh:
            fh.write("member,Acc,Label\n")
            for name, acc, rate in rows:
                fh.write(f"{name},{acc:.4f},{rate:.4f}\n")
                print(f"{name:>20s}  Acc {acc:7.3f}  Label {rate:7.3f}")
    print(cache)
    return 0


def _pseudo_labels(cfg: RunConfig, manifest: DatasetManifest, inputs) -> list[PseudoLabelSequence]:
    cache = cfg.out_dir / "ple"
    if inputs and all((cache / f"{v[0]}.txt").exists() for v in inputs):
        pls = []
        for name, f, ts, _ in inputs:
            pl = PseudoLabelSequence(load_labels(cache / f"{name}.txt", manifest.classes))
            if pl.T != f.T:
                raise ValidationError(f"{cache / name}.txt: {pl.T} labels for {f.T} frames")
            check_pseudo_labels(pl, ts)
            pls.append(pl)
        return pls
    log.info("no complete pseudo-label cache in %s; running ensembling", cache)
    cmd_ple(cfg)
    return _pseudo_labels(cfg, manifest, inputs)


def cmd_train(cfg: RunConfig) -> int:
    manifest = load_manifest(cfg.manifest_path)
    inputs = _load_video_inputs(manifest)
    if not inputs:
        raise ValidationError("manifest lists no videos")
    pls = _pseudo_labels(cfg, manifest, inputs)
    videos = [Video(name, f, ts, pl, gt) for (name, f, ts, gt), pl in zip(inputs, pls)]
    enc = cfg.encoder(inputs[0][1].D, len(manifest.classes))
    result = train_ic(videos, cfg.schedule(), enc)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(cfg.checkpoint_path, result.params, enc)
    write_history(cfg.out_dir / "history.csv", result.history)
    labels_dir = cfg.out_dir / "ic_labels"
    labels_dir.mkdir(exist_ok=True)
    for name, pl in result.pseudo_labels.items():
        save_labels(labels_dir / f"{name}.txt", pl, manifest.classes)
    print(cfg.checkpoint_path)
    return 0


def _score_dir(cfg: RunConfig, manifest: DatasetManifest, inputs, preds) -> int:
    scores = []
    for (name, f, ts, gt), pred in zip(inputs, preds):
        if gt is None:
            continue
        pl_path = cfg.out_dir / "ic_labels" / f"{name}.txt"
        pl = PseudoLabelSequence(load_labels(pl_path, manifest.classes)) if pl_path.exists() else None
        scores.append(score_video(name, pred, gt, pl))
    summary = summarize(scores)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_report(cfg.out_dir / "report.csv", scores, summary)
    if summary is not None:
        f1 = " ".join(f"{x:.2f}" for x in summary.f1)
        print(f"F1@{{10,25,50}} {f1}  Edit {summary.edit:.2f}  Acc {summary.acc:.2f}")
    print(cfg.out_dir / "report.csv")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    manifest = load_manifest(cfg.manifest_path)
    params, enc = load_checkpoint(cfg.checkpoint_path)
    inputs = _load_video_inputs(manifest)
    for name, f, *_ in inputs:
        if f.D != enc.in_dim:
            raise ValidationError(f"{name}: features have D={f.D}, checkpoint expects {enc.in_dim}")
    if enc.num_classes != len(manifest.classes):
        raise ValidationError(f"checkpoint has {enc.num_classes} classes, manifest {len(manifest.classes)}")
    preds = _map(lambda v: predict(params, enc, v[1]), inputs)
    pred_dir = cfg.out_dir / "predictions"
    pred_dir.mkdir(parents=True, exist_ok=True)
    for (name, *_), p in zip(inputs, preds):
        save_labels(pred_dir / f"{name}.txt", p, manifest.classes)
    return _score_dir(cfg, manifest, inputs, preds)


def cmd_report(cfg: RunConfig) -> int:
    """Rescore saved predictions against ground truth."""
    manifest = load_manifest(cfg.manifest_path)
    inputs = _load_video_inputs(manifest)
    pred_dir = cfg.out_dir / "predictions"
    preds = [load_labels(pred_dir / f"{name}.txt", manifest.classes) for name, *_ in inputs]
    return _score_dir(cfg, manifest, inputs, preds)


COMMANDS = {"synth": cmd_synth, "ple": cmd_ple, "train": cmd_train, "eval": cmd_eval, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stampseg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).splitlines()[0])
        p.add_argument("--config", type=Path)
        for f in fields(RunConfig):
            p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None,
                           help=f"config key {f.name} ({FIELD_TYPES[f.name]})")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)
                 if getattr(args, f.name) is not None}
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg)
    except (ValidationError, TrainingError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
