"""Kernel evaluation, gamma resolution and row-wise kernel computation.

Every kernel value is produced by the same row formula
(``_kernel_values``), whether a single pair or a full row is requested.
Each element of a row depends only on its own pair, so values are
bit-identical across ``eval_kernel``, ``kernel_row`` and cache hits.
"""

from __future__ import annotations

from collections import OrderedDict
from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum
from urllib.parse import parse_qs

import numpy as np

from src.svm.errors import InvalidParameterError, KernelDomainError, ShapeError

AUTO = "auto"


class KernelKind(StrEnum):
    RBF = "rbf"
    POLYNOMIAL = "polynomial"
    SIGMOID = "sigmoid"
    CHI_SQUARE = "chi_square"


TEXT_NAMES: dict[str, KernelKind] = {
    "rbf": KernelKind.RBF,
    "poly": KernelKind.POLYNOMIAL,
    "polynomial": KernelKind.POLYNOMIAL,
    "sigmoid": KernelKind.SIGMOID,
    "chi2": KernelKind.CHI_SQUARE,
    "chi_square": KernelKind.CHI_SQUARE,
}
CANONICAL_TEXT_NAMES: dict[KernelKind, str] = {
    KernelKind.RBF: "rbf",
    KernelKind.POLYNOMIAL: "poly",
    KernelKind.SIGMOID: "sigmoid",
    KernelKind.CHI_SQUARE: "chi2",
}


@dataclass(frozen=True)
class KernelSpec:
    """Kernel kind plus parameters; ``gamma=None`` means auto (1/feature_dim)."""

    kind: KernelKind = KernelKind.RBF
    gamma: float | None = None
    degree: int = 3
    coef0: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if self.gamma is not None:
            if not np.isfinite(self.gamma) or self.gamma <= 0:
                raise InvalidParameterError(f"gamma must be positive, got {self.gamma}")
            object.__setattr__(self, "gamma", float(self.gamma))
        if self.kind == KernelKind.POLYNOMIAL and self.degree < 1:
            raise InvalidParameterError(f"polynomial degree must be >= 1, got {self.degree}")
        object.__setattr__(self, "coef0", float(self.coef0))

    @classmethod
    def parse(cls, text: str) -> KernelSpec:
        """Parse ``rbf?gamma=auto``, ``poly?gamma=1&degree=3&coef0=1`` and friends."""

        name, _, query = text.strip().partition("?")
        kind = TEXT_NAMES.get(name.strip().casefold())
        if kind is None:
            raise InvalidParameterError(f"unknown kernel {name!r}")
        params = {key: values[-1] for key, values in parse_qs(query, strict_parsing=False).items()}
        unknown = set(params) - {"gamma", "degree", "coef0"}
        if unknown:
            raise InvalidParameterError(f"unknown kernel parameters: {sorted(unknown)}")
        try:
            gamma_text = params.get("gamma", AUTO)
            gamma = None if gamma_text.casefold() == AUTO else float(gamma_text)
            degree = int(params.get("degree", 3))
            coef0 = float(params.get("coef0", 0.0))
        except ValueError as exc:
            raise InvalidParameterError(f"invalid kernel parameter in {text!r}: {exc}") from exc
        return cls(kind=kind, gamma=gamma, degree=degree, coef0=coef0)

    def to_text(self) -> str:
        gamma = AUTO if self.gamma is None else repr(self.gamma)
        parts = [f"gamma={gamma}"]
        if self.kind == KernelKind.POLYNOMIAL:
            parts.append(f"degree={self.degree}")
        if self.kind in (KernelKind.POLYNOMIAL, KernelKind.SIGMOID):
            parts.append(f"coef0={self.coef0!r}")
        return f"{CANONICAL_TEXT_NAMES[self.kind]}?{'&'.join(parts)}"


def resolve_gamma(setting: float | str | None, feature_dim: int) -> float:
    if feature_dim < 1:
        raise InvalidParameterError(f"feature_dim must be >= 1, got {feature_dim}")
    if setting is None or (isinstance(setting, str) and setting.casefold() == AUTO):
        return 1.0 / feature_dim
    value = float(setting)
    if not np.isfinite(value) or value <= 0:
        raise InvalidParameterError(f"gamma must be positive, got {setting}")
    return value


def _as_vector(x: Sequence[float] | np.ndarray) -> np.ndarray:
    vector = np.asarray(x, dtype=np.float64)
    if vector.ndim != 1 or vector.size == 0:
        raise ShapeError(f"expected a non-empty feature vector, got shape {vector.shape}")
    return vector


def _kernel_values(spec: KernelSpec, x: np.ndarray, samples: np.ndarray) -> np.ndarray:
    gamma = resolve_gamma(spec.gamma, x.shape[0])
    if spec.kind == KernelKind.RBF:
        diff = samples - x
        return np.exp(-gamma * (diff * diff).sum(axis=1))
    if spec.kind == KernelKind.POLYNOMIAL:
        inner = (samples * x).sum(axis=1)
        return (gamma * inner + spec.coef0) ** spec.degree
    if spec.kind == KernelKind.SIGMOID:
        inner = (samples * x).sum(axis=1)
        return np.tanh(gamma * inner + spec.coef0)
    if (x < 0).any() or (samples < 0).any():
        raise KernelDomainError("chi-square kernel requires nonnegative features")
    diff = samples - x
    total = samples + x
    terms = np.divide(diff * diff, total, out=np.zeros_like(total), where=total > 0)
    return np.exp(-gamma * terms.sum(axis=1))


def eval_kernel(
    spec: KernelSpec,
    x: Sequence[float] | np.ndarray,
    y: Sequence[float] | np.ndarray,
) -> float:
    left = _as_vector(x)
    right = _as_vector(y)
    if left.shape != right.shape:
        raise ShapeError(f"dimension mismatch: {left.shape[0]} != {right.shape[0]}")
    return float(_kernel_values(spec, left, right[np.newaxis, :])[0])


class KernelCache:
    """LRU cache of kernel rows keyed by stable sample index.

    A cached row holds kernel values against the owner's sample store in
    store order. Stores only ever append, so a shorter cached row is a valid
    prefix and is extended in place; a deletion from the store must be
    mirrored with ``discard_position``.
    """

    def __init__(self, capacity_bytes: int = 64 * 1024 * 1024) -> None:
        if capacity_bytes < 0:
            raise InvalidParameterError("cache capacity must be nonnegative")
        self.capacity_bytes = capacity_bytes
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()
        self.used_bytes = 0
        self.hits = 0
        self.misses = 0
        self.evictions = 0

    def __len__(self) -> int:
        return len(self._rows)

    def __contains__(self, key: int) -> bool:
        return key in self._rows

    def get(self, key: int) -> np.ndarray | None:
        row = self._rows.get(key)
        if row is not None:
            self._rows.move_to_end(key)
        return row

    def put(self, key: int, row: np.ndarray) -> None:
        self.discard(key)
        if row.nbytes > self.capacity_bytes:
            return
        self._rows[key] = row
        self.used_bytes += row.nbytes
        while self.used_bytes > self.capacity_bytes:
            _, evicted = self._rows.popitem(last=False)
            self.used_bytes -= evicted.nbytes
            self.evictions += 1

    def discard(self, key: int) -> None:
        row = self._rows.pop(key, None)
        if row is not None:
            self.used_bytes -= row.nbytes

    def discard_position(self, position: int) -> None:
        for key, row in list(self._rows.items()):
            if row.shape[0] > position:
                shortened = np.delete(row, position)
                self.used_bytes -= row.nbytes - shortened.nbytes
                self._rows[key] = shortened

    def clear(self) -> None:
        self._rows.clear()
        self.used_bytes = 0


def kernel_row(
    spec: KernelSpec,
    x: Sequence[float] | np.ndarray,
    samples: Sequence[Sequence[float]] | np.ndarray,
    cache: KernelCache | None = None,
    key: int | None = None,
) -> np.ndarray:
    """Kernel values of ``x`` against each row of ``samples``.

    With a cache and ``key`` (the stable index of ``x``), the cached row is
    reused and only the not-yet-cached tail of ``samples`` is evaluated.
    """

    vector = _as_vector(x)
    matrix = np.asarray(samples, dtype=np.float64)
    if matrix.size == 0:
        return np.zeros(0, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != vector.shape[0]:
        raise ShapeError(
            f"samples of shape {matrix.shape} do not match dimension {vector.shape[0]}"
        )
    count = matrix.shape[0]
    if cache is None or key is None:
        return _kernel_values(spec, vector, matrix)
    cached = cache.get(key)
    if cached is not None and cached.shape[0] >= count:
        cache.hits += 1
        return cached[:count].copy()
    cache.misses += 1
    if cached is None:
        row = _kernel_values(spec, vector, matrix)
    else:
        row = np.concatenate([cached, _kernel_values(spec, vector, matrix[cached.shape[0] :])])
    cache.put(key, row)
    return row.copy()
