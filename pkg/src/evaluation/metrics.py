"""Classification metrics computed from decision values."""

from __future__ import annotations

import math

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from src.svm.core import HEALTHY, Dataset, Model, decision_values
from src.svm.errors import EmptyDatasetError, UndefinedMetricError

PROBABILITY_CLIP = 1e-15


class MetricsReport(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    accuracy: float = Field(ge=0, le=1)
    log_loss: float = Field(ge=0)
    roc_auc: float | None = Field(default=None, ge=0, le=1)
    f1: float = Field(ge=0, le=1)
    n_samples: int = Field(ge=1)

    def as_table_row(self) -> dict[str, float | None]:
        """Results-table layout: accuracy in percent, the rest as fractions."""

        return {
            "Accuracy": round(self.accuracy * 100, 2),
            "Log-loss": round(self.log_loss, 4),
            "ROC-AUC": None if self.roc_auc is None else round(self.roc_auc, 4),
            "F1": round(self.f1, 4),
        }


def predicted_labels(scores: np.ndarray) -> np.ndarray:
    return np.where(scores >= 0, HEALTHY, -HEALTHY)


def accuracy_score(labels: np.ndarray, scores: np.ndarray) -> float:
    return float((predicted_labels(scores) == labels).mean())


def logistic(scores: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -np.asarray(scores, dtype=np.float64)))


def log_loss_score(labels: np.ndarray, scores: np.ndarray) -> float:
    probability = np.clip(logistic(scores), PROBABILITY_CLIP, 1.0 - PROBABILITY_CLIP)
    positive = labels == HEALTHY
    losses = np.where(positive, -np.log(probability), -np.log1p(-probability))
    return float(losses.mean())


def roc_auc_score(labels: np.ndarray, scores: np.ndarray) -> float:
    """Rank-sum AUC; tied scores share their average rank (ties count one half)."""

    positive = labels == HEALTHY
    n_positive = int(positive.sum())
    n_negative = int(positive.size - n_positive)
    if n_positive == 0 or n_negative == 0:
        raise UndefinedMetricError("ROC-AUC needs both classes in the evaluation set")
    ranks = pd.Series(scores).rank(method="average").to_numpy()
    rank_sum = float(ranks[positive].sum())
    return (rank_sum - n_positive * (n_positive + 1) / 2.0) / (n_positive * n_negative)


def f1_score(labels: np.ndarray, scores: np.ndarray) -> float:
    predicted = predicted_labels(scores) == HEALTHY
    actual = labels == HEALTHY
    true_positive = int((predicted & actual).sum())
    if true_positive == 0:
        return 0.0
    precision = true_positive / int(predicted.sum())
    recall = true_positive / int(actual.sum())
    return 2.0 * precision * recall / (precision + recall)


def report_from_scores(
    labels: np.ndarray,
    scores: np.ndarray,
    *,
    allow_undefined_auc: bool = False,
) -> MetricsReport:
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.size == 0:
        raise EmptyDatasetError("cannot evaluate on an empty dataset")
    try:
        auc: float | None = roc_auc_score(labels, scores)
    except UndefinedMetricError:
        if not allow_undefined_auc:
            raise
        auc = None
    loss = log_loss_score(labels, scores)
    if not math.isfinite(loss):
        raise UndefinedMetricError("log-loss is not finite")
    return MetricsReport(
        accuracy=accuracy_score(labels, scores),
        log_loss=loss,
        roc_auc=auc,
        f1=f1_score(labels, scores),
        n_samples=int(labels.size),
    )


def evaluate(
    model: Model,
    dataset: Dataset,
    *,
    allow_undefined_auc: bool = False,
) -> MetricsReport:
    return report_from_scores(
        dataset.labels,
        decision_values(model, dataset),
        allow_undefined_auc=allow_undefined_auc,
    )
