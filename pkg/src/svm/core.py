"""Shared sample/model vocabulary and the decision function used by every solver."""

from __future__ import annotations

import json
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

import numpy as np

from src.svm.errors import InvalidParameterError, ShapeError
from src.svm.kernel import KernelSpec, kernel_row

HEALTHY = 1
DEFECTED = -1
BOX_TOLERANCE = 1e-8


class CoefficientConvention(StrEnum):
    # alpha in [0, C], sign carried by the label: f(x) = sum a_j y_j K + bias
    UNSIGNED = "unsigned"
    # alpha carries the sign: f(x) = sum a_j K + bias
    SIGNED = "signed"


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int
    index: int | None = None

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 1 or features.size == 0:
            raise ShapeError("sample features must be a non-empty vector")
        if not np.isfinite(features).all():
            raise InvalidParameterError("sample features must be finite")
        if self.label not in (HEALTHY, DEFECTED):
            raise InvalidParameterError(f"label must be +1 or -1, got {self.label}")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "label", int(self.label))


@dataclass(frozen=True)
class Dataset:
    """Ordered samples sharing one feature dimension.

    ``indices`` are the stable zero-based ids assigned at ingestion; subsets
    keep the ids of the samples they select.
    """

    features: np.ndarray
    labels: np.ndarray
    indices: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise ShapeError(f"features must be a 2-D array, got shape {features.shape}")
        if features.shape[0] and features.shape[1] == 0:
            raise ShapeError("features must have at least one column")
        if labels.shape != (features.shape[0],):
            raise ShapeError("labels must have one entry per sample")
        if not np.isfinite(features).all():
            raise InvalidParameterError("features must be finite")
        if labels.size and not np.isin(labels, (HEALTHY, DEFECTED)).all():
            raise InvalidParameterError("labels must be +1 or -1")
        indices = (
            np.arange(features.shape[0], dtype=np.int64)
            if self.indices is None
            else np.asarray(self.indices, dtype=np.int64)
        )
        if indices.shape != labels.shape:
            raise ShapeError("indices must have one entry per sample")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "indices", indices)

    @classmethod
    def from_samples(cls, samples: Sequence[Sample]) -> Dataset:
        if not samples:
            raise InvalidParameterError("cannot build a dataset from zero samples")
        dims = {sample.features.shape[0] for sample in samples}
        if len(dims) != 1:
            raise ShapeError(f"samples have mixed dimensions: {sorted(dims)}")
        return cls(
            features=np.stack([sample.features for sample in samples]),
            labels=np.array([sample.label for sample in samples]),
            indices=np.array(
                [
                    position if sample.index is None else sample.index
                    for position, sample in enumerate(samples)
                ]
            ),
        )

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def __iter__(self) -> Iterator[Sample]:
        for position in range(len(self)):
            yield self.sample(position)

    def sample(self, position: int) -> Sample:
        return Sample(
            features=self.features[position],
            label=int(self.labels[position]),
            index=int(self.indices[position]),
        )

    def subset(self, positions: Sequence[int] | np.ndarray) -> Dataset:
        selected = np.asarray(positions, dtype=np.int64)
        return Dataset(
            features=self.features[selected],
            labels=self.labels[selected],
            indices=self.indices[selected],
        )

    def class_counts(self) -> dict[int, int]:
        return {
            HEALTHY: int((self.labels == HEALTHY).sum()),
            DEFECTED: int((self.labels == DEFECTED).sum()),
        }


@dataclass(frozen=True)
class Model:
    """Immutable snapshot of a trained classifier."""

    kernel: KernelSpec
    support_features: np.ndarray
    support_labels: np.ndarray
    coefficients: np.ndarray
    bias: float
    C: float
    convention: CoefficientConvention
    feature_dim: int
    converged: bool = True

    def __post_init__(self) -> None:
        features = np.array(self.support_features, dtype=np.float64).reshape(
            -1, self.feature_dim
        )
        labels = np.array(self.support_labels, dtype=np.int64).reshape(-1)
        coefficients = np.array(self.coefficients, dtype=np.float64).reshape(-1)
        if not (features.shape[0] == labels.shape[0] == coefficients.shape[0]):
            raise ShapeError("coefficients and support samples must have equal length")
        if self.C <= 0:
            raise InvalidParameterError(f"C must be positive, got {self.C}")
        slack = BOX_TOLERANCE * max(1.0, self.C)
        if self.convention == CoefficientConvention.UNSIGNED:
            low = np.zeros_like(coefficients)
            high = np.full_like(coefficients, self.C)
        else:
            low = np.minimum(0.0, self.C * labels)
            high = np.maximum(0.0, self.C * labels)
        if ((coefficients < low - slack) | (coefficients > high + slack)).any():
            raise InvalidParameterError("coefficients fall outside their box constraints")
        for name, value in (
            ("support_features", features),
            ("support_labels", labels),
            ("coefficients", coefficients),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "convention", CoefficientConvention(self.convention))
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def support_samples(self) -> list[Sample]:
        return [
            Sample(features=features, label=int(label))
            for features, label in zip(self.support_features, self.support_labels, strict=True)
        ]

    @property
    def weights(self) -> np.ndarray:
        """Per-support multiplier of K(x_j, x) in the decision function."""

        if self.convention == CoefficientConvention.UNSIGNED:
            return self.coefficients * self.support_labels
        return self.coefficients

    def to_signed(self) -> Model:
        if self.convention == CoefficientConvention.SIGNED:
            return self
        return self._with(self.coefficients * self.support_labels, CoefficientConvention.SIGNED)

    def to_unsigned(self) -> Model:
        if self.convention == CoefficientConvention.UNSIGNED:
            return self
        return self._with(self.coefficients * self.support_labels, CoefficientConvention.UNSIGNED)

    def _with(self, coefficients: np.ndarray, convention: CoefficientConvention) -> Model:
        return Model(
            kernel=self.kernel,
            support_features=self.support_features,
            support_labels=self.support_labels,
            coefficients=coefficients,
            bias=self.bias,
            C=self.C,
            convention=convention,
            feature_dim=self.feature_dim,
            converged=self.converged,
        )


def _check_dimension(model: Model, x: np.ndarray) -> np.ndarray:
    vector = np.asarray(x, dtype=np.float64)
    if vector.ndim != 1 or vector.shape[0] != model.feature_dim:
        raise ShapeError(
            f"expected a vector of dimension {model.feature_dim}, got shape {vector.shape}"
        )
    return vector


def decision_value(model: Model, x: Sequence[float] | np.ndarray) -> float:
    vector = _check_dimension(model, np.asarray(x))
    if model.coefficients.size == 0:
        return model.bias
    row = kernel_row(model.kernel, vector, model.support_features)
    return float(model.weights @ row + model.bias)


def decision_values(model: Model, dataset: Dataset) -> np.ndarray:
    if len(dataset) and dataset.feature_dim != model.feature_dim:
        raise ShapeError(
            f"dataset dimension {dataset.feature_dim} != model dimension {model.feature_dim}"
        )
    return np.array([decision_value(model, x) for x in dataset.features], dtype=np.float64)


def sign_label(value: float) -> int:
    # Exact zero goes to the healthy class.
    return HEALTHY if value >= 0 else DEFECTED


def predict(model: Model, x: Sequence[float] | np.ndarray) -> int:
    return sign_label(decision_value(model, x))


def dual_objective(model: Model) -> float:
    """W(a) = sum a_i - 1/2 sum_ij a_i a_j y_i y_j K_ij over the support set."""

    unsigned = model.to_unsigned()
    if unsigned.coefficients.size == 0:
        return 0.0
    weights = unsigned.weights
    quadratic = 0.0
    for position, features in enumerate(unsigned.support_features):
        row = kernel_row(unsigned.kernel, features, unsigned.support_features)
        quadratic += weights[position] * float(weights @ row)
    return float(unsigned.coefficients.sum() - 0.5 * quadratic)


def model_to_dict(model: Model) -> dict[str, Any]:
    return {
        "kernel": model.kernel.to_text(),
        "support_features": model.support_features.tolist(),
        "support_labels": model.support_labels.tolist(),
        "coefficients": model.coefficients.tolist(),
        "bias": model.bias,
        "C": model.C,
        "convention": model.convention.value,
        "feature_dim": model.feature_dim,
        "converged": model.converged,
    }


def model_from_dict(payload: dict[str, Any]) -> Model:
    return Model(
        kernel=KernelSpec.parse(str(payload["kernel"])),
        support_features=np.asarray(payload["support_features"], dtype=np.float64),
        support_labels=np.asarray(payload["support_labels"], dtype=np.int64),
        coefficients=np.asarray(payload["coefficients"], dtype=np.float64),
        bias=float(payload["bias"]),
        C=float(payload["C"]),
        convention=CoefficientConvention(payload["convention"]),
        feature_dim=int(payload["feature_dim"]),
        converged=bool(payload.get("converged", True)),
    )


def model_to_json(model: Model) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, allow_nan=False)


def model_from_json(text: str) -> Model:
    return model_from_dict(json.loads(text))
