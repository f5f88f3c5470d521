"""Batch SMO with maximal-violating-pair selection over a precomputed Gram matrix."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from src.svm.core import CoefficientConvention, Dataset, Model
from src.svm.errors import EmptyDatasetError, InvalidParameterError
from src.svm.kernel import KernelSpec, kernel_row

logger = logging.getLogger(__name__)

CURVATURE_MIN = 1e-12


@dataclass(frozen=True)
class SmoConfig:
    C: float
    kernel: KernelSpec
    tolerance: float = 1e-6
    max_passes: int = 100

    def __post_init__(self) -> None:
        if not math.isfinite(self.C) or self.C <= 0:
            raise InvalidParameterError(f"C must be positive, got {self.C}")
        if not math.isfinite(self.tolerance) or self.tolerance <= 0:
            raise InvalidParameterError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_passes < 1:
            raise InvalidParameterError(f"max_passes must be >= 1, got {self.max_passes}")


@dataclass(frozen=True)
class SmoResult:
    model: Model
    iterations: int
    gap: float
    converged: bool


def gram_matrix(kernel: KernelSpec, features: np.ndarray) -> np.ndarray:
    return np.stack([kernel_row(kernel, x, features) for x in features])


def solve_detailed(dataset: Dataset, config: SmoConfig) -> SmoResult:
    n = len(dataset)
    if n == 0:
        raise EmptyDatasetError("cannot solve on an empty dataset")
    labels = dataset.labels
    if np.unique(labels).size < 2:
        model = Model(
            kernel=config.kernel,
            support_features=np.zeros((0, dataset.feature_dim)),
            support_labels=np.zeros(0, dtype=np.int64),
            coefficients=np.zeros(0),
            bias=float(labels[0]),
            C=config.C,
            convention=CoefficientConvention.UNSIGNED,
            feature_dim=dataset.feature_dim,
        )
        return SmoResult(model=model, iterations=0, gap=0.0, converged=True)

    K = gram_matrix(config.kernel, dataset.features)
    lower = np.minimum(0.0, config.C * labels)
    upper = np.maximum(0.0, config.C * labels)
    alpha = np.zeros(n, dtype=np.float64)
    gradient = labels.astype(np.float64)
    limit = config.max_passes * n
    iterations = 0
    gap = math.inf
    converged = False

    while iterations < limit:
        up = np.flatnonzero(alpha < upper)
        down = np.flatnonzero(alpha > lower)
        i = int(up[np.argmax(gradient[up])])
        j = int(down[np.argmin(gradient[down])])
        gap = float(gradient[i] - gradient[j])
        if gap <= config.tolerance:
            converged = True
            break
        iterations += 1
        curvature = K[i, i] + K[j, j] - 2.0 * K[i, j]
        newton = gap / curvature if curvature > CURVATURE_MIN else math.inf
        room_i = upper[i] - alpha[i]
        room_j = alpha[j] - lower[j]
        lam = min(newton, room_i, room_j)
        alpha[i] = upper[i] if lam == room_i else alpha[i] + lam
        alpha[j] = lower[j] if lam == room_j else alpha[j] - lam
        gradient -= lam * (K[i] - K[j])

    if not converged:
        logger.warning("SMO stopped after %d iterations with gap %.3e", iterations, gap)

    free = (alpha > lower) & (alpha < upper)
    if free.any():
        bias = float(gradient[free].mean())
    else:
        up = np.flatnonzero(alpha < upper)
        down = np.flatnonzero(alpha > lower)
        bias = float((gradient[up].max() + gradient[down].min()) / 2.0)

    active = np.flatnonzero(alpha != 0)
    model = Model(
        kernel=config.kernel,
        support_features=dataset.features[active],
        support_labels=labels[active],
        coefficients=np.abs(alpha[active]),
        bias=bias,
        C=config.C,
        convention=CoefficientConvention.UNSIGNED,
        feature_dim=dataset.feature_dim,
        converged=converged,
    )
    return SmoResult(model=model, iterations=iterations, gap=gap, converged=converged)


def solve(dataset: Dataset, config: SmoConfig) -> Model:
    return solve_detailed(dataset, config).model
