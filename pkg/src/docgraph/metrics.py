"""Classification metrics: accuracy, one-vs-rest AUC (rank statistic with
ties counted half), confusion matrix."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .gnn import GnnModel, forward
from .graphs import GraphDataset


@dataclass
class EvalReport:
    accuracy: float
    macro_auc: float
    per_class_auc: list[float | None]
    confusion_matrix: list[list[int]]
    n_examples: int

    def to_json(self) -> str:
        return json.dumps({
            "accuracy": self.accuracy,
            "macro_auc": self.macro_auc,
            "per_class_auc": self.per_class_auc,
            "confusion_matrix": self.confusion_matrix,
            "n_examples": self.n_examples,
        }, indent=2)


def _rank_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    """P(score_pos > score_neg) + 1/2 P(tie) via average ranks."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1  # average 1-based rank
        i = j + 1
    n_pos = int(positives.sum())
    n_neg = len(scores) - n_pos
    rank_sum = ranks[positives].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def roc_auc_ovr(scores: np.ndarray, labels: np.ndarray
                ) -> tuple[list[float | None], float]:
    """One-vs-rest AUC per class plus the macro mean over defined classes.

    A class with no positives or no negatives has no defined AUC; it is
    reported as None and skipped in the mean.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 2 or len(scores) != len(labels):
        raise ValueError("scores must be (n_examples, n_classes) aligned "
                         "with labels")
    per_class: list[float | None] = []
    for c in range(scores.shape[1]):
        positives = labels == c
        n_pos = int(positives.sum())
        if n_pos == 0 or n_pos == len(labels):
            per_class.append(None)
            continue
        per_class.append(_rank_auc(scores[:, c], positives))
    defined = [a for a in per_class if a is not None]
    if not defined:
        raise ValueError("no class has both positive and negative examples")
    return per_class, float(np.mean(defined))


def confusion_matrix(labels: np.ndarray, predictions: np.ndarray,
                     n_classes: int) -> np.ndarray:
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    for truth, pred in zip(labels, predictions):
        matrix[truth, pred] += 1
    return matrix


def evaluate(model: GnnModel, dataset: GraphDataset) -> EvalReport:
    """Run inference over the dataset and compute all report metrics."""
    if not dataset.graphs:
        raise ValueError("dataset is empty")
    scores = np.stack([forward(g, model) for g in dataset.graphs])
    labels = np.asarray([g.label for g in dataset.graphs])
    predictions = scores.argmax(axis=1)  # argmax takes the lowest index on ties
    per_class, macro = roc_auc_ovr(scores, labels)
    return EvalReport(
        accuracy=float((predictions == labels).mean()),
        macro_auc=macro,
        per_class_auc=per_class,
        confusion_matrix=confusion_matrix(labels, predictions,
                                          dataset.n_classes).tolist(),
        n_examples=len(labels),
    )
