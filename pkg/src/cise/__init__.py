"""Calibrated extractive summarization with retention guarantees.

Score sentences, calibrate a single importance threshold on a small
labeled sample, and filter new documents so that at least a fraction
``beta`` of their important sentences survives with probability at
least ``1 - alpha`` — distribution-free, in finite samples.
"""

from .core import (
    CalibrationArtifact,
    CalibrationConfig,
    Document,
    GroundTruth,
    ScoreVector,
    SummarySelection,
    calibrate,
    conformal_score,
    coverage_bounds,
    filter_at,
    recall,
    summarize,
)
from .errors import CiseError, DataFormatError, ExternalServiceError, UsageError

__version__ = "0.1.0"

__all__ = [
    "Document",
    "GroundTruth",
    "ScoreVector",
    "CalibrationConfig",
    "CalibrationArtifact",
    "SummarySelection",
    "recall",
    "filter_at",
    "conformal_score",
    "calibrate",
    "summarize",
    "coverage_bounds",
    "CiseError",
    "UsageError",
    "DataFormatError",
    "ExternalServiceError",
    "__version__",
]
