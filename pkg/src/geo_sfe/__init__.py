"""Structural feature engineering for generative-engine visibility."""

from __future__ import annotations

from .citation import ArchitectureProfile, TargetProfile, compute_targets, predict, predict_mixed
from .document import DocumentTree, parse, serialize, sentence_split
from .features import CorpusStats, FeatureVector, compute_stats, extract_all, normalize
from .optimizer import OptimizationConfig, TransformLog, optimize
from .semantic import check_preservation
from .text import tokenize

__all__ = [
    "ArchitectureProfile",
    "CorpusStats",
    "DocumentTree",
    "FeatureVector",
    "OptimizationConfig",
    "TargetProfile",
    "TransformLog",
    "check_preservation",
    "compute_stats",
    "compute_targets",
    "extract_all",
    "normalize",
    "optimize",
    "parse",
    "predict",
    "predict_mixed",
    "sentence_split",
    "serialize",
    "tokenize",
]

__version__ = "0.1.0"
