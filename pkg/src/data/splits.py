"""Seeded train/validation/test partitions and epoch shuffles."""

from __future__ import annotations

import math
import operator

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.svm.core import Dataset
from src.svm.errors import ConfigurationError

# Guards floor() against fractions like 0.3 * 10 = 2.9999999999999996.
ROUNDING_SLACK = 1e-9


class SplitSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    train_fraction: float = Field(default=0.3, gt=0, lt=1)
    validation_fraction: float = Field(default=0.2, ge=0, lt=1)
    seed: int = Field(default=0, ge=0)


def split_positions(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    order = np.random.default_rng(spec.seed).permutation(n)
    pool_size = math.floor(spec.train_fraction * n + ROUNDING_SLACK)
    validation_size = math.floor(spec.validation_fraction * pool_size + ROUNDING_SLACK)
    pool = order[:pool_size]
    validation = pool[:validation_size]
    train = pool[validation_size:]
    test = order[pool_size:]
    if not train.size or not test.size:
        raise ConfigurationError(
            f"split of {n} samples at train_fraction={spec.train_fraction} "
            "leaves an empty train or test partition"
        )
    if spec.validation_fraction > 0 and not validation.size:
        raise ConfigurationError(
            f"validation_fraction={spec.validation_fraction} of {pool_size} pool samples "
            "leaves an empty validation partition"
        )
    return train, validation, test


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    train, validation, test = split_positions(len(dataset), spec)
    return dataset.subset(train), dataset.subset(validation), dataset.subset(test)


def shuffle_epoch(dataset: Dataset | int, epoch_index: int, seed: int) -> np.ndarray:
    n = len(dataset) if isinstance(dataset, Dataset) else operator.index(dataset)
    return np.random.default_rng([seed, epoch_index]).permutation(n)


def stream_order(n: int, epoch_size: int, seed: int, passes: int = 1) -> list[np.ndarray]:
    """Stream positions chunked into epochs, each chunk shuffled by its global epoch index."""

    epochs: list[np.ndarray] = []
    for _ in range(passes):
        for start in range(0, n, epoch_size):
            size = min(epoch_size, n - start)
            epochs.append(start + shuffle_epoch(size, len(epochs), seed))
    return epochs
