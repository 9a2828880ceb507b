"""Pseudo-label ensembling: strict intersection of full pseudo-label sequences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .boundaries import constrained_kmedoids, energy_function_boundaries, temporal_agnes
from .core import (
    AMBIGUOUS,
    FeatureSequence,
    PseudoLabelSequence,
    TimestampAnnotation,
    ValidationError,
    partition_to_labels,
)


@dataclass(frozen=True)
class Member:
    algorithm: str
    view: str = "full"

    def __str__(self):
        return self.algorithm if self.view == "full" else f"{self.algorithm}@{self.view}"


@dataclass(frozen=True)
class EnsembleSpec:
    """Ensemble members as ``(algorithm, feature view)`` pairs.

    ``views`` maps a view name to a half-open column range; ``"full"`` is
    always available.
    """

    members: tuple[Member, ...]
    views: tuple[tuple[str, int, int], ...] = ()
    kmedoids_max_iters: int = 50
    agnes_max_frames: int = 20_000
    agnes_downsample: int = 1

    def __post_init__(self):
        if not self.members:
            raise ValidationError("ensemble needs at least one member")
        names = {"full"} | {v[0] for v in self.views}
        for m in self.members:
            if m.algorithm not in ("energy", "kmedoids", "agnes"):
                raise ValidationError(f"unknown algorithm {m.algorithm!r}")
            if m.view not in names:
                raise ValidationError(f"unknown feature view {m.view!r}")

    @classmethod
    def parse(cls, members: str, views: str = "", **kw) -> "EnsembleSpec":
        """Build from strings like ``"energy,kmedoids@rgb"`` and ``"rgb:0:1024,flow:1024:2048"``."""
        parsed_views = []
        for item in filter(None, (v.strip() for v in views.split(","))):
            try:
                name, start, stop = item.split(":")
                parsed_views.append((name, int(start), int(stop)))
            except ValueError:
                raise ValidationError(f"bad view {item!r}, expected name:start:stop") from None
        parsed = []
        for item in filter(None, (m.strip() for m in members.split(","))):
            algo, _, view = item.partition("@")
            parsed.append(Member(algo, view or "full"))
        return cls(tuple(parsed), tuple(parsed_views), **kw)

    def feature_view(self, f: FeatureSequence, name: str) -> FeatureSequence:
        if name == "full":
            return f
        for vname, start, stop in self.views:
            if vname == name:
                return f.view(start, stop)
        raise ValidationError(f"unknown feature view {name!r}")


DEFAULT_SPEC = EnsembleSpec((Member("energy"), Member("kmedoids"), Member("agnes")))


def ensemble(sequences: Sequence[PseudoLabelSequence]) -> PseudoLabelSequence:
    """Keep a frame's label only where every member agrees on it."""
    if not sequences:
        raise ValidationError("ensemble needs at least one sequence")
    T = sequences[0].T
    for i, s in enumerate(sequences):
        if s.T != T:
            raise ValidationError(f"sequence {i} has length {s.T}, expected {T}")
        if not s.is_full:
            raise ValidationError(f"sequence {i} contains ambiguous frames")
    stack = np.stack([s.labels for s in sequences])
    agree = np.all(stack == stack[0], axis=0)
    return PseudoLabelSequence(np.where(agree, stack[0], AMBIGUOUS))


def run_member(f: FeatureSequence, ts: TimestampAnnotation, spec: EnsembleSpec,
               member: Member) -> PseudoLabelSequence:
    x = spec.feature_view(f, member.view)
    if member.algorithm == "energy":
        part = energy_function_boundaries(x, ts)
    elif member.algorithm == "kmedoids":
        part = constrained_kmedoids(x, ts, spec.kmedoids_max_iters)
    else:
        part = temporal_agnes(x, ts, spec.agnes_max_frames, spec.agnes_downsample)
    return partition_to_labels(part, ts)


def run_ple_members(f: FeatureSequence, ts: TimestampAnnotation,
                    spec: EnsembleSpec = DEFAULT_SPEC) -> tuple[PseudoLabelSequence, list[PseudoLabelSequence]]:
    """Ensembled sequence together with each member's full sequence."""
    members = [run_member(f, ts, spec, m) for m in spec.members]
    return ensemble(members), members


def run_ple(f: FeatureSequence, ts: TimestampAnnotation,
            spec: EnsembleSpec = DEFAULT_SPEC) -> PseudoLabelSequence:
    return run_ple_members(f, ts, spec)[0]
