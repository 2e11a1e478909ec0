"""Classification evaluation metrics: top-k accuracy and single-label MAP@3.

Ranks are computed with deterministic tie-breaking (lowest class index wins),
so every metric value is exactly reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ndgrad import Array


@dataclass
class EvalResult:
    task: str
    map_at_3: float
    top1: float
    top5: float
    num_examples: int

    def as_csv_row(self) -> str:
        def fmt(v: float) -> str:
            return "nan" if math.isnan(v) else f"{v:.6f}"

        return f"{self.task},{fmt(self.map_at_3)},{fmt(self.top1)},{fmt(self.top5)},{self.num_examples}"


def _logit_matrix(logits) -> np.ndarray:
    data = logits.data if isinstance(logits, Array) else np.asarray(logits)
    if data.ndim != 2:
        raise ValueError(f"logits must be (B, C), got shape {data.shape}")
    return data


def _ranks(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """1-based rank of the true label; ties broken by lowest class index."""
    B, C = logits.shape
    if labels.shape != (B,):
        raise ValueError(f"labels must have shape ({B},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= C:
        raise ValueError(f"labels must lie in [0, {C})")
    true_scores = logits[np.arange(B), labels][:, None]
    higher = (logits > true_scores).sum(axis=1)
    tied_earlier = ((logits == true_scores) & (np.arange(C)[None, :] < labels[:, None])).sum(axis=1)
    return 1 + higher + tied_earlier


def top_k_accuracy(logits, labels, k: int) -> float:
    """Fraction of rows whose true label ranks within the k best logits."""
    data = _logit_matrix(logits)
    C = data.shape[1]
    if not 1 <= k <= C:
        raise ValueError(f"k must lie in [1, {C}], got {k}")
    ranks = _ranks(data, np.asarray(labels))
    return float(np.mean(ranks <= k))


def map_at_3(logits, labels) -> float:
    """Mean of 1/rank truncated at rank 3 (single-true-label MAP@3)."""
    data = _logit_matrix(logits)
    if data.shape[1] < 3:
        raise ValueError(f"map_at_3 needs at least 3 classes, got {data.shape[1]}")
    ranks = _ranks(data, np.asarray(labels))
    scores = np.where(ranks <= 3, 1.0 / ranks, 0.0)
    return float(np.mean(scores))


def evaluate_logits(task: str, logits, labels) -> EvalResult:
    """Assemble the standard report row; top-5 clamps to C and MAP@3 is NaN for C < 3."""
    data = _logit_matrix(logits)
    labels = np.asarray(labels)
    C = data.shape[1]
    return EvalResult(
        task=task,
        map_at_3=map_at_3(data, labels) if C >= 3 else float("nan"),
        top1=top_k_accuracy(data, labels, 1),
        top5=top_k_accuracy(data, labels, min(5, C)),
        num_examples=data.shape[0],
    )
