"""Semi-online LASVM: PROCESS, REPROCESS and the finishing step.

Coefficients are signed (``alpha_s`` carries the label) and the cached
gradient of a support sample is ``g_s = y_s - sum_k alpha_k K(x_k, x_s)``.
The decision function is ``f(x) = sum_k alpha_k K(x_k, x) + b``.
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from src.common.logging_config import log_event
from src.data.splits import stream_order
from src.svm.core import CoefficientConvention, Dataset, Model, Sample
from src.svm.errors import (
    InvalidParameterError,
    NonConvergenceError,
    SampleNotFoundError,
    ShapeError,
)
from src.svm.kernel import KernelCache, KernelSpec, kernel_row

logger = logging.getLogger(__name__)

CURVATURE_MIN = 1e-12
FINISH_ITERATION_LIMIT = 1_000_000
EQUALITY_TOLERANCE = 1e-8
DEFAULT_TAU = 0.01


@dataclass(frozen=True)
class EpochSchedule:
    epoch_size: int = 200
    epochs_before_finish: int = 5
    shuffle_seed: int = 0
    passes: int = 1

    def __post_init__(self) -> None:
        if self.epoch_size < 1:
            raise InvalidParameterError(f"epoch_size must be >= 1, got {self.epoch_size}")
        if self.epochs_before_finish < 1:
            raise InvalidParameterError(
                f"epochs_before_finish must be >= 1, got {self.epochs_before_finish}"
            )
        if self.passes < 1:
            raise InvalidParameterError(f"passes must be >= 1, got {self.passes}")


@dataclass(frozen=True)
class LasvmAudit:
    equality_residual: float
    box_violation: float
    gradient_drift: float

    @property
    def ok(self) -> bool:
        return (
            self.equality_residual <= EQUALITY_TOLERANCE
            and self.box_violation <= 0.0
            and self.gradient_drift <= EQUALITY_TOLERANCE
        )


def lower_bound(label: int, C: float) -> float:
    return min(0.0, C * label)


def upper_bound(label: int, C: float) -> float:
    return max(0.0, C * label)


class LasvmState:
    """Support set with signed coefficients and cached gradients."""

    def __init__(
        self,
        C: float,
        tau: float,
        kernel: KernelSpec,
        *,
        cache: KernelCache | None = None,
    ) -> None:
        if not np.isfinite(C) or C <= 0:
            raise InvalidParameterError(f"C must be positive, got {C}")
        if not np.isfinite(tau) or tau <= 0:
            raise InvalidParameterError(f"tau must be positive, got {tau}")
        self.C = float(C)
        self.tau = float(tau)
        self.kernel = kernel
        self.cache = cache if cache is not None else KernelCache()
        self.feature_dim: int | None = None
        self.features = np.zeros((0, 0), dtype=np.float64)
        self.labels = np.zeros(0, dtype=np.int64)
        self.ids = np.zeros(0, dtype=np.int64)
        self.alpha = np.zeros(0, dtype=np.float64)
        self.gradient = np.zeros(0, dtype=np.float64)
        self.bias = 0.0
        self.delta = math.inf
        self.next_index = 0
        self._positions: dict[int, int] = {}

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def __contains__(self, index: int) -> bool:
        return index in self._positions

    def position(self, index: int) -> int:
        try:
            return self._positions[index]
        except KeyError:
            raise SampleNotFoundError(index) from None

    def alpha_of(self, index: int) -> float:
        return float(self.alpha[self.position(index)])

    def gradient_of(self, index: int) -> float:
        return float(self.gradient[self.position(index)])

    def row(self, position: int) -> np.ndarray:
        return kernel_row(
            self.kernel,
            self.features[position],
            self.features,
            self.cache,
            key=int(self.ids[position]),
        )

    def lower_bounds(self) -> np.ndarray:
        return np.minimum(0.0, self.C * self.labels)

    def upper_bounds(self) -> np.ndarray:
        return np.maximum(0.0, self.C * self.labels)

    def _append(self, sample: Sample) -> int:
        features = sample.features
        if self.feature_dim is None:
            self.feature_dim = int(features.shape[0])
            self.features = np.zeros((0, self.feature_dim), dtype=np.float64)
        if features.shape[0] != self.feature_dim:
            raise ShapeError(
                f"sample dimension {features.shape[0]} != state dimension {self.feature_dim}"
            )
        index = self.next_index if sample.index is None else int(sample.index)
        self.next_index = max(self.next_index, index + 1)
        self.features = np.vstack([self.features, features[np.newaxis, :]])
        self.labels = np.append(self.labels, sample.label)
        self.ids = np.append(self.ids, index)
        self.alpha = np.append(self.alpha, 0.0)
        self.gradient = np.append(self.gradient, 0.0)
        self._positions[index] = len(self) - 1
        return len(self) - 1

    def _remove(self, positions: list[int]) -> None:
        for position in sorted(positions, reverse=True):
            self.cache.discard(int(self.ids[position]))
            self.cache.discard_position(position)
        keep = np.setdiff1d(np.arange(len(self)), positions)
        self.features = self.features[keep]
        self.labels = self.labels[keep]
        self.ids = self.ids[keep]
        self.alpha = self.alpha[keep]
        self.gradient = self.gradient[keep]
        self._positions = {int(value): pos for pos, value in enumerate(self.ids)}

    def holds(self, sample: Sample) -> bool:
        if sample.index is not None and int(sample.index) in self._positions:
            return True
        if not len(self) or sample.features.shape[0] != self.feature_dim:
            return False
        same = (self.features == sample.features).all(axis=1) & (self.labels == sample.label)
        return bool(same.any())

    def recompute_gradients(self) -> np.ndarray:
        if not len(self):
            return np.zeros(0, dtype=np.float64)
        total = np.zeros(len(self), dtype=np.float64)
        for position in np.flatnonzero(self.alpha != 0):
            total += self.alpha[position] * self.row(position)
        return self.labels - total

    def verify(self) -> LasvmAudit:
        fresh = self.recompute_gradients()
        below = self.lower_bounds() - self.alpha
        above = self.alpha - self.upper_bounds()
        return LasvmAudit(
            equality_residual=float(abs(self.alpha.sum())),
            box_violation=float(max(0.0, below.max(initial=0.0), above.max(initial=0.0))),
            gradient_drift=float(np.abs(fresh - self.gradient).max(initial=0.0)),
        )

    def to_model(self) -> Model:
        active = np.flatnonzero(self.alpha != 0)
        return Model(
            kernel=self.kernel,
            support_features=self.features[active],
            support_labels=self.labels[active],
            coefficients=self.alpha[active],
            bias=self.bias,
            C=self.C,
            convention=CoefficientConvention.SIGNED,
            feature_dim=self.feature_dim or 1,
        )

    def to_payload(self) -> dict[str, Any]:
        return {
            "C": self.C,
            "tau": self.tau,
            "kernel": self.kernel.to_text(),
            "feature_dim": self.feature_dim,
            "features": self.features.tolist(),
            "labels": self.labels.tolist(),
            "ids": self.ids.tolist(),
            "alpha": self.alpha.tolist(),
            "gradient": self.gradient.tolist(),
            "bias": self.bias,
            "delta": None if math.isinf(self.delta) else self.delta,
            "next_index": self.next_index,
        }

    @classmethod
    def from_payload(
        cls,
        payload: dict[str, Any],
        *,
        cache: KernelCache | None = None,
    ) -> LasvmState:
        state = cls(
            float(payload["C"]),
            float(payload["tau"]),
            KernelSpec.parse(payload["kernel"]),
            cache=cache,
        )
        feature_dim = payload["feature_dim"]
        state.feature_dim = None if feature_dim is None else int(feature_dim)
        if state.feature_dim:
            state.features = np.asarray(payload["features"], dtype=np.float64).reshape(
                -1, state.feature_dim
            )
        state.labels = np.asarray(payload["labels"], dtype=np.int64)
        state.ids = np.asarray(payload["ids"], dtype=np.int64)
        state.alpha = np.asarray(payload["alpha"], dtype=np.float64)
        state.gradient = np.asarray(payload["gradient"], dtype=np.float64)
        state.bias = float(payload["bias"])
        delta = payload["delta"]
        state.delta = math.inf if delta is None else float(delta)
        state.next_index = int(payload["next_index"])
        state._positions = {int(value): pos for pos, value in enumerate(state.ids)}
        return state


def is_tau_violating(state: LasvmState, i: int, j: int) -> bool:
    pi = state.position(i)
    pj = state.position(j)
    return _violates(state, pi, pj)


def _violates(state: LasvmState, pi: int, pj: int, tau: float | None = None) -> bool:
    threshold = state.tau if tau is None else tau
    return bool(
        state.alpha[pi] < upper_bound(int(state.labels[pi]), state.C)
        and state.alpha[pj] > lower_bound(int(state.labels[pj]), state.C)
        and state.gradient[pi] - state.gradient[pj] > threshold
    )


def direction_step(
    g_i: float,
    g_j: float,
    K_ii: float,
    K_jj: float,
    K_ij: float,
    alpha_i: float,
    alpha_j: float,
    C: float,
    y_i: int,
    y_j: int,
) -> float:
    curvature = K_ii + K_jj - 2.0 * K_ij
    newton = (g_i - g_j) / curvature if curvature > CURVATURE_MIN else math.inf
    step = min(newton, upper_bound(y_i, C) - alpha_i, alpha_j - lower_bound(y_j, C))
    return max(0.0, step)


def _step(state: LasvmState, pi: int, pj: int) -> float:
    row_i = state.row(pi)
    row_j = state.row(pj)
    y_i = int(state.labels[pi])
    y_j = int(state.labels[pj])
    room_i = upper_bound(y_i, state.C) - state.alpha[pi]
    room_j = state.alpha[pj] - lower_bound(y_j, state.C)
    lam = direction_step(
        float(state.gradient[pi]),
        float(state.gradient[pj]),
        float(row_i[pi]),
        float(row_j[pj]),
        float(row_i[pj]),
        float(state.alpha[pi]),
        float(state.alpha[pj]),
        state.C,
        y_i,
        y_j,
    )
    if lam <= 0:
        return 0.0
    # Clipped steps land exactly on the box bound.
    state.alpha[pi] = upper_bound(y_i, state.C) if lam == room_i else state.alpha[pi] + lam
    state.alpha[pj] = lower_bound(y_j, state.C) if lam == room_j else state.alpha[pj] - lam
    state.gradient -= lam * (row_i - row_j)
    return lam


def _extremes(state: LasvmState, exclude: int | None = None) -> tuple[int | None, int | None]:
    """Positions of argmax g over ``alpha < upper`` and argmin g over ``alpha > lower``."""

    up = state.alpha < state.upper_bounds()
    down = state.alpha > state.lower_bounds()
    if exclude is not None:
        up[exclude] = False
        down[exclude] = False
    i = None
    j = None
    if up.any():
        candidates = np.flatnonzero(up)
        i = int(candidates[np.argmax(state.gradient[candidates])])
    if down.any():
        candidates = np.flatnonzero(down)
        j = int(candidates[np.argmin(state.gradient[candidates])])
    return i, j


def process(state: LasvmState, candidate: Sample) -> LasvmState:
    if state.holds(candidate):
        return state
    position = state._append(candidate)
    row = state.row(position)
    state.gradient[position] = candidate.label - float(state.alpha @ row)
    best_i, best_j = _extremes(state, exclude=position)
    if candidate.label == 1:
        pi, pj = position, best_j
    else:
        pi, pj = best_i, position
    if pi is None or pj is None:
        return state
    if _violates(state, pi, pj):
        _step(state, pi, pj)
    return state


def _reprocess(state: LasvmState, tau: float | None = None) -> tuple[int, bool]:
    pi, pj = _extremes(state)
    if pi is None or pj is None:
        return 0, False
    stepped = False
    if _violates(state, pi, pj, tau):
        stepped = _step(state, pi, pj) > 0
    pi, pj = _extremes(state)
    if pi is None or pj is None:
        return 0, stepped
    g_i = float(state.gradient[pi])
    g_j = float(state.gradient[pj])
    idle = state.alpha == 0
    prune = idle & (
        ((state.labels == -1) & (state.gradient >= g_i))
        | ((state.labels == 1) & (state.gradient <= g_j))
    )
    removed = np.flatnonzero(prune).tolist()
    if removed:
        state._remove(removed)
    state.bias = (g_i + g_j) / 2.0
    state.delta = g_i - g_j
    return len(removed), stepped


def reprocess(state: LasvmState) -> tuple[LasvmState, int]:
    removed, _ = _reprocess(state)
    return state, removed


def finish(state: LasvmState, tau: float | None = None) -> LasvmState:
    finish_with_count(state, tau)
    return state


def finish_with_count(state: LasvmState, tau: float | None = None) -> int:
    threshold = state.tau if tau is None else float(tau)
    if threshold <= 0:
        raise InvalidParameterError(f"tau must be positive, got {threshold}")
    iterations = 0
    while state.delta >= threshold:
        iterations += 1
        if iterations > FINISH_ITERATION_LIMIT:
            diagnostics = {"iterations": iterations, "delta": state.delta, "support": len(state)}
            raise NonConvergenceError(
                f"finishing step exceeded {FINISH_ITERATION_LIMIT} iterations", diagnostics
            )
        _, stepped = _reprocess(state, threshold)
        if not stepped:
            break
    return iterations


@dataclass(frozen=True)
class SampleRecord:
    position: int
    index: int
    seconds: float
    support_size: int


@dataclass(frozen=True)
class FinishRecord:
    position: int
    epoch: int
    iterations: int
    delta: float
    seconds: float
    scheduled: bool
    terminal: bool


@dataclass
class TrainingLog:
    samples: list[SampleRecord] = field(default_factory=list)
    finishes: list[FinishRecord] = field(default_factory=list)

    @property
    def total_seconds(self) -> float:
        return float(
            sum(record.seconds for record in self.samples)
            + sum(record.seconds for record in self.finishes)
        )


def train_online(
    state: LasvmState,
    stream: Dataset,
    schedule: EpochSchedule,
    *,
    start: int = 0,
    stop: int | None = None,
    after_sample: Callable[[LasvmState, int], None] | None = None,
) -> tuple[LasvmState, TrainingLog]:
    """Consume ``stream`` in epoch-shuffled order from ``start`` up to ``stop``.

    ``after_sample(state, position)`` fires once the sample at ``position``
    (and any finish due there) has been applied; checkpoints hook in here.
    """

    if not len(stream):
        raise InvalidParameterError("cannot train on an empty stream")
    epochs = stream_order(len(stream), schedule.epoch_size, schedule.shuffle_seed, schedule.passes)
    order = np.concatenate(epochs)
    epoch_ends = np.cumsum([len(epoch) for epoch in epochs])
    ends = {int(end): number for number, end in enumerate(epoch_ends, start=1)}
    total = int(order.shape[0])
    stop = total if stop is None else min(stop, total)
    log = TrainingLog()

    for position in range(start, stop):
        sample = stream.sample(int(order[position]))
        began = time.perf_counter()
        process(state, sample)
        _reprocess(state)
        log.samples.append(
            SampleRecord(
                position=position,
                index=int(sample.index) if sample.index is not None else position,
                seconds=time.perf_counter() - began,
                support_size=len(state),
            )
        )
        consumed = position + 1
        epoch = ends.get(consumed)
        scheduled = epoch is not None and epoch % schedule.epochs_before_finish == 0
        terminal = consumed == total
        if scheduled or terminal:
            began = time.perf_counter()
            iterations = finish_with_count(state)
            finish_seconds = time.perf_counter() - began
            record = FinishRecord(
                position=consumed,
                epoch=epoch or int(np.searchsorted(epoch_ends, consumed) + 1),
                iterations=iterations,
                delta=state.delta,
                seconds=finish_seconds,
                scheduled=scheduled,
                terminal=terminal,
            )
            log.finishes.append(record)
            log_event(
                logger,
                "LASVM_FINISH",
                position=consumed,
                epoch=record.epoch,
                iterations=iterations,
                delta=None if math.isinf(state.delta) else state.delta,
                support_size=len(state),
                terminal=terminal,
            )
        if after_sample is not None:
            after_sample(state, position)
    return state, log
