"""Timestamp-supervised action segmentation by clustering.

Pseudo-labels are built by ensembling three segment-constrained clustering
algorithms, then grown into ambiguous gaps by iterative clustering while a
small temporal encoder is trained.
"""

from .core import (
    AMBIGUOUS,
    FeatureSequence,
    PseudoLabelSequence,
    SegmentPartition,
    TimestampAnnotation,
    ValidationError,
    partition_to_labels,
    validate_pseudo_labels,
)

__all__ = [
    "AMBIGUOUS",
    "FeatureSequence",
    "PseudoLabelSequence",
    "SegmentPartition",
    "TimestampAnnotation",
    "ValidationError",
    "partition_to_labels",
    "validate_pseudo_labels",
]
