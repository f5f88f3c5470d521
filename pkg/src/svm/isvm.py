"""Exact incremental/decremental SVM over KKT-partitioned sample sets.

Notation: ``Q_ij = y_i y_j K_ij``, the margin gradient of sample ``i`` is
``g_i = sum_j Q_ij a_j + y_i mu - 1`` and the bordered matrix over
``{mu} + S`` is ``[[0, y_S^T], [y_S, Q_SS]]``. Its inverse is kept in
``IsvmState.inverse`` and updated by rank-one expansion/shrinking as
samples enter and leave the support set.

Every stored sample lands in one of three sets after each operation:

- remainder R: a = 0 and g >= 0
- support S:   0 < a < C and g = 0 (boundary samples may sit at a bound)
- error E:     a = C and g <= 0
"""

from __future__ import annotations

import logging
from collections.abc import Iterable
from dataclasses import dataclass
from enum import StrEnum
from typing import Any

import numpy as np

from src.common.logging_config import log_event
from src.svm.core import CoefficientConvention, Model, Sample
from src.svm.errors import (
    DegeneracyError,
    InvalidParameterError,
    InvariantViolationError,
    NonConvergenceError,
    SampleNotFoundError,
    ShapeError,
)
from src.svm.kernel import KernelCache, KernelSpec, kernel_row

logger = logging.getLogger(__name__)

KKT_TOLERANCE = 1e-6
KAPPA_MIN = 1e-12
KAPPA_RELATIVE = 1e-9
PIVOT_MIN = 1e-12
SENSITIVITY_FLOOR = 1e-12
TIE_TOLERANCE = 1e-12
EQUALITY_TOLERANCE = 1e-8
INVERSE_TOLERANCE = 1e-6
INVERSE_REFRESH = 1e-2 * INVERSE_TOLERANCE
ITERATION_FACTOR = 10

# Per-position membership codes; CANDIDATE marks the sample being inserted
# or removed while its coefficient is in motion.
REMAINDER, SUPPORT, ERROR, CANDIDATE = 0, 1, 2, 3


class Membership(StrEnum):
    SUPPORT = "S"
    ERROR = "E"
    REMAINDER = "R"


MEMBERSHIP_CODES = {
    Membership.REMAINDER: REMAINDER,
    Membership.SUPPORT: SUPPORT,
    Membership.ERROR: ERROR,
}
CODE_MEMBERSHIPS = {code: membership for membership, code in MEMBERSHIP_CODES.items()}


class LimitEvent(StrEnum):
    SUPPORT_TO_REMAINDER = "support_to_remainder"
    SUPPORT_TO_ERROR = "support_to_error"
    REMAINDER_TO_SUPPORT = "remainder_to_support"
    ERROR_TO_SUPPORT = "error_to_support"
    CANDIDATE_TO_SUPPORT = "candidate_to_support"
    CANDIDATE_TO_ERROR = "candidate_to_error"
    CANDIDATE_TO_REMAINDER = "candidate_to_remainder"
    CANDIDATE_RELEASED = "candidate_released"


# Tie order among events at the same step length for the same sample.
EVENT_PRIORITY = {event: rank for rank, event in enumerate(LimitEvent)}


@dataclass(frozen=True)
class SensitivityPair:
    """Rates of change per unit step of the candidate coefficient.

    ``beta[0]`` is the bias rate and ``beta[1:]`` the support-coefficient
    rates in border order. ``gamma_margin`` holds margin-gradient rates for
    every stored position (support entries are zero). In bias-only mode
    (empty support set) the candidate coefficient stays put and only the
    bias moves.
    """

    beta: np.ndarray
    gamma_margin: np.ndarray
    candidate_gamma: float
    candidate_rate: float
    bias_only: bool
    direction: int = 1

    @property
    def bias_rate(self) -> float:
        return float(self.beta[0])

    @property
    def support_rates(self) -> np.ndarray:
        return self.beta[1:]


@dataclass(frozen=True)
class Increment:
    delta_alpha: float
    event: LimitEvent
    index: int


@dataclass(frozen=True)
class IsvmAudit:
    equality_residual: float
    box_violation: float
    kkt_violation: float
    inverse_residual: float
    gradient_drift: float
    worst_index: int | None

    @property
    def ok(self) -> bool:
        return (
            self.equality_residual <= EQUALITY_TOLERANCE
            and self.box_violation <= 0.0
            and self.kkt_violation <= KKT_TOLERANCE
            and self.inverse_residual <= INVERSE_TOLERANCE
        )


def classify_membership(alpha_i: float, g_i: float, C: float) -> Membership:
    if alpha_i < 0 or alpha_i > C:
        raise InvalidParameterError(f"alpha {alpha_i} outside [0, {C}]")
    if alpha_i == 0:
        if g_i >= -KKT_TOLERANCE:
            return Membership.REMAINDER
    elif alpha_i == C:
        if g_i <= KKT_TOLERANCE:
            return Membership.ERROR
    elif abs(g_i) <= KKT_TOLERANCE:
        return Membership.SUPPORT
    raise InvariantViolationError(
        f"(alpha={alpha_i}, g={g_i}, C={C}) satisfies no KKT case; state is corrupt"
    )


def expand_inverse(
    inverse_border: np.ndarray,
    eta_k: np.ndarray,
    K_kk: float,
    beta_k: np.ndarray | None = None,
) -> np.ndarray:
    """Grow the bordered inverse by one row/column via the Schur complement."""

    if beta_k is None:
        beta_k = -inverse_border @ eta_k
    kappa = float(K_kk + eta_k @ beta_k)
    if kappa <= max(KAPPA_MIN, KAPPA_RELATIVE * abs(K_kk)):
        raise DegeneracyError(f"kappa={kappa:.3e}: sample is linearly dependent on the border")
    size = inverse_border.shape[0]
    expanded = np.zeros((size + 1, size + 1), dtype=np.float64)
    expanded[:size, :size] = inverse_border
    direction = np.append(beta_k, 1.0)
    expanded += np.outer(direction, direction) / kappa
    return expanded


def shrink_inverse(inverse_border: np.ndarray, k: int) -> np.ndarray:
    """Drop border row/column ``k`` (1-based over support; 0 is the bias)."""

    size = inverse_border.shape[0]
    if not 1 <= k < size:
        raise InvalidParameterError(f"border index {k} outside 1..{size - 1}")
    pivot = float(inverse_border[k, k])
    if abs(pivot) < PIVOT_MIN:
        raise DegeneracyError(f"shrink pivot {pivot:.3e} is degenerate")
    keep = np.delete(np.arange(size), k)
    column = inverse_border[keep, k]
    row = inverse_border[k, keep]
    return inverse_border[np.ix_(keep, keep)] - np.outer(column, row) / pivot


def first_support_inverse(y_k: int, Q_kk: float) -> np.ndarray:
    # Inverse of [[0, y], [y, q]] with y^2 = 1.
    return np.array([[-Q_kk, float(y_k)], [float(y_k), 0.0]], dtype=np.float64)


class IsvmState:
    """Lossless incremental solver state; single owner, mutated in place."""

    def __init__(
        self,
        C: float,
        kernel: KernelSpec,
        *,
        cache: KernelCache | None = None,
    ) -> None:
        if not np.isfinite(C) or C <= 0:
            raise InvalidParameterError(f"C must be positive, got {C}")
        self.C = float(C)
        self.kernel = kernel
        self.cache = cache if cache is not None else KernelCache()
        self.feature_dim: int | None = None
        self.features = np.zeros((0, 0), dtype=np.float64)
        self.labels = np.zeros(0, dtype=np.int64)
        self.ids = np.zeros(0, dtype=np.int64)
        self.alpha = np.zeros(0, dtype=np.float64)
        self.gradient = np.zeros(0, dtype=np.float64)
        self.membership = np.zeros(0, dtype=np.int8)
        self.support: list[int] = []
        self.bias = 0.0
        self.inverse: np.ndarray | None = None
        self.next_index = 0
        self._positions: dict[int, int] = {}

    # -- storage -------------------------------------------------------

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def __contains__(self, index: int) -> bool:
        return index in self._positions

    def position(self, index: int) -> int:
        try:
            return self._positions[index]
        except KeyError:
            raise SampleNotFoundError(index) from None

    def membership_of(self, index: int) -> Membership:
        return CODE_MEMBERSHIPS[int(self.membership[self.position(index)])]

    def alpha_of(self, index: int) -> float:
        return float(self.alpha[self.position(index)])

    def members(self, membership: Membership) -> list[int]:
        code = MEMBERSHIP_CODES[membership]
        return [int(index) for index in self.ids[self.membership == code]]

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
        if index in self._positions:
            raise InvalidParameterError(f"sample {index} is already stored")
        self.next_index = max(self.next_index, index + 1)
        position = len(self)
        self.features = np.vstack([self.features, features[np.newaxis, :]])
        self.labels = np.append(self.labels, sample.label)
        self.ids = np.append(self.ids, index)
        self.alpha = np.append(self.alpha, 0.0)
        self.gradient = np.append(self.gradient, 0.0)
        self.membership = np.append(self.membership, np.int8(CANDIDATE))
        self._positions[index] = position
        return position

    def _delete(self, position: int) -> None:
        index = int(self.ids[position])
        self.features = np.delete(self.features, position, axis=0)
        self.labels = np.delete(self.labels, position)
        self.ids = np.delete(self.ids, position)
        self.alpha = np.delete(self.alpha, position)
        self.gradient = np.delete(self.gradient, position)
        self.membership = np.delete(self.membership, position)
        self.cache.discard(index)
        self.cache.discard_position(position)
        self._positions = {int(value): pos for pos, value in enumerate(self.ids)}

    def row(self, position: int) -> np.ndarray:
        """Kernel values of stored sample ``position`` against the whole store."""

        return kernel_row(
            self.kernel,
            self.features[position],
            self.features,
            self.cache,
            key=int(self.ids[position]),
        )

    def support_positions(self) -> np.ndarray:
        return np.array([self._positions[index] for index in self.support], dtype=np.int64)

    def bordered_matrix(self) -> np.ndarray:
        positions = self.support_positions()
        size = positions.shape[0]
        matrix = np.zeros((size + 1, size + 1), dtype=np.float64)
        if size == 0:
            return matrix
        labels = self.labels[positions].astype(np.float64)
        kernel = np.stack([self.row(position)[positions] for position in positions])
        matrix[0, 1:] = labels
        matrix[1:, 0] = labels
        matrix[1:, 1:] = np.outer(labels, labels) * kernel
        return matrix

    # -- border maintenance -------------------------------------------

    def _add_to_border(self, position: int) -> None:
        y_k = int(self.labels[position])
        K_k = self.row(position)
        if not self.support:
            self.inverse = first_support_inverse(y_k, float(K_k[position]))
            self.support = [int(self.ids[position])]
            return
        positions = self.support_positions()
        eta = np.concatenate(
            [[float(y_k)], self.labels[positions] * y_k * K_k[positions]]
        )
        assert self.inverse is not None
        self.inverse = expand_inverse(self.inverse, eta, float(K_k[position]))
        self.support.append(int(self.ids[position]))

    def _remove_from_border(self, index: int) -> None:
        k = self.support.index(index) + 1
        if len(self.support) == 1:
            self.support = []
            self.inverse = None
            return
        assert self.inverse is not None
        try:
            self.inverse = shrink_inverse(self.inverse, k)
            self.support.remove(index)
        except DegeneracyError as exc:
            self.support.remove(index)
            self.rebuild_inverse()
            log_event(
                logger,
                "ISVM_INVERSE_REBUILT",
                level=logging.WARNING,
                reason=str(exc),
                support_size=len(self.support),
            )

    def rebuild_inverse(self) -> None:
        if not self.support:
            self.inverse = None
            return
        try:
            self.inverse = np.linalg.inv(self.bordered_matrix())
        except np.linalg.LinAlgError as exc:
            raise DegeneracyError(f"bordered matrix is singular: {exc}") from exc

    def inverse_residual(self) -> float:
        if not self.support:
            return 0.0
        assert self.inverse is not None
        product = self.bordered_matrix() @ self.inverse
        return float(np.linalg.norm(product - np.eye(product.shape[0]), ord="fro"))

    # -- gradients and audits -----------------------------------------

    def fresh_gradients(self) -> np.ndarray:
        """Margin gradients recomputed from scratch for every stored sample."""

        if not len(self):
            return np.zeros(0, dtype=np.float64)
        active = np.flatnonzero(self.alpha > 0)
        total = np.full(len(self), self.bias, dtype=np.float64)
        if active.size:
            rows = np.stack([self.row(position) for position in active])
            total += (self.alpha[active] * self.labels[active]) @ rows
        return self.labels * total - 1.0

    def verify(self) -> IsvmAudit:
        fresh = self.fresh_gradients()
        equality = float(abs(self.labels @ self.alpha)) if len(self) else 0.0
        box = float(
            max(0.0, -self.alpha.min(initial=0.0), self.alpha.max(initial=0.0) - self.C)
        )
        violations = np.zeros(len(self), dtype=np.float64)
        remainder = self.membership == REMAINDER
        support = self.membership == SUPPORT
        error = self.membership == ERROR
        violations[remainder] = np.maximum(0.0, -fresh[remainder]) + self.alpha[remainder]
        violations[support] = np.abs(fresh[support])
        violations[error] = np.maximum(0.0, fresh[error]) + (self.C - self.alpha[error])
        violations[self.membership == CANDIDATE] = np.inf
        worst = int(np.argmax(violations)) if len(self) else None
        return IsvmAudit(
            equality_residual=equality,
            box_violation=box,
            kkt_violation=float(violations.max(initial=0.0)),
            inverse_residual=self.inverse_residual(),
            gradient_drift=float(np.abs(fresh - self.gradient).max(initial=0.0)),
            worst_index=None if worst is None else int(self.ids[worst]),
        )

    def to_model(self) -> Model:
        active = np.flatnonzero(self.alpha > 0)
        return Model(
            kernel=self.kernel,
            support_features=self.features[active],
            support_labels=self.labels[active],
            coefficients=self.alpha[active],
            bias=self.bias,
            C=self.C,
            convention=CoefficientConvention.UNSIGNED,
            feature_dim=self.feature_dim or 1,
        )

    def diagnostics(self) -> dict[str, Any]:
        return {
            "stored": len(self),
            "support": list(self.support),
            "error": self.members(Membership.ERROR),
            "bias": self.bias,
            "alpha_sum": float(self.alpha.sum()),
            "cache_hits": self.cache.hits,
            "cache_misses": self.cache.misses,
        }

    # -- checkpoint payload -------------------------------------------

    def to_payload(self) -> dict[str, Any]:
        return {
            "C": self.C,
            "kernel": self.kernel.to_text(),
            "feature_dim": self.feature_dim,
            "features": self.features.tolist(),
            "labels": self.labels.tolist(),
            "ids": self.ids.tolist(),
            "alpha": self.alpha.tolist(),
            "gradient": self.gradient.tolist(),
            "membership": [CODE_MEMBERSHIPS[int(code)].value for code in self.membership],
            "support": list(self.support),
            "bias": self.bias,
            "inverse": None if self.inverse is None else self.inverse.tolist(),
            "next_index": self.next_index,
        }

    @classmethod
    def from_payload(
        cls,
        payload: dict[str, Any],
        *,
        cache: KernelCache | None = None,
    ) -> IsvmState:
        state = cls(float(payload["C"]), KernelSpec.parse(payload["kernel"]), cache=cache)
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
        state.membership = np.array(
            [MEMBERSHIP_CODES[Membership(value)] for value in payload["membership"]],
            dtype=np.int8,
        )
        state.support = [int(index) for index in payload["support"]]
        state.bias = float(payload["bias"])
        inverse = payload["inverse"]
        state.inverse = None if inverse is None else np.asarray(inverse, dtype=np.float64)
        state.next_index = int(payload["next_index"])
        state._positions = {int(value): pos for pos, value in enumerate(state.ids)}
        return state


# -- operations ----------------------------------------------------------


def margin_gradient(state: IsvmState, i: int) -> float:
    """g_i = y_i f(x_i) - 1, computed from scratch for stored sample ``i``."""

    position = state.position(i)
    row = state.row(position)
    weights = state.alpha * state.labels
    return float(state.labels[position] * (weights @ row + state.bias) - 1.0)


def sensitivities(state: IsvmState, c: int, *, direction: int = 1) -> SensitivityPair:
    """Coefficient and margin sensitivities for moving candidate ``c``.

    ``direction`` is +1 when learning (candidate coefficient grows) and -1
    when unlearning; returned rates are per unit step in that direction.
    """

    position = state.position(c)
    y = state.labels.astype(np.float64)
    y_c = float(y[position])
    if not state.support:
        gamma = direction * y * y_c
        return SensitivityPair(
            beta=np.array([direction * y_c]),
            gamma_margin=gamma,
            candidate_gamma=float(gamma[position]),
            candidate_rate=0.0,
            bias_only=True,
            direction=direction,
        )
    assert state.inverse is not None
    K_c = state.row(position)
    positions = state.support_positions()
    y_s = y[positions]
    eta = np.concatenate([[y_c], y_s * y_c * K_c[positions]])
    beta = -state.inverse @ eta
    K_s = np.stack([state.row(support_position) for support_position in positions])
    gamma = y * (y_c * K_c + (beta[1:] * y_s) @ K_s + beta[0])
    gamma[positions] = 0.0
    return SensitivityPair(
        beta=direction * beta,
        gamma_margin=direction * gamma,
        candidate_gamma=float(direction * gamma[position]),
        candidate_rate=float(direction),
        bias_only=False,
        direction=direction,
    )


def max_increment(
    state: IsvmState,
    c: int,
    sens: SensitivityPair,
    *,
    blocked: set[int] | frozenset[int] = frozenset(),
) -> Increment:
    """Largest step before one of the four bookkeeping events fires."""

    position = state.position(c)
    events: list[tuple[float, int, LimitEvent]] = []

    # Case 1: a support coefficient reaches 0 or C.
    for rate, index in zip(sens.support_rates, state.support, strict=True):
        alpha = state.alpha[state.position(index)]
        if rate > SENSITIVITY_FLOOR:
            events.append(
                (max(0.0, (state.C - alpha) / rate), index, LimitEvent.SUPPORT_TO_ERROR)
            )
        elif rate < -SENSITIVITY_FLOOR:
            events.append((max(0.0, alpha / -rate), index, LimitEvent.SUPPORT_TO_REMAINDER))

    # Case 2: a remainder or error sample reaches the margin.
    gamma = sens.gamma_margin
    gradient = state.gradient
    eligible = np.ones(len(state), dtype=bool)
    eligible[position] = False
    for index in blocked:
        if index in state:
            eligible[state.position(index)] = False
    remainder = eligible & (state.membership == REMAINDER) & (gamma < -SENSITIVITY_FLOOR)
    error = eligible & (state.membership == ERROR) & (gamma > SENSITIVITY_FLOOR)
    for other in np.flatnonzero(remainder):
        step = max(0.0, gradient[other]) / -gamma[other]
        events.append((step, int(state.ids[other]), LimitEvent.REMAINDER_TO_SUPPORT))
    for other in np.flatnonzero(error):
        step = max(0.0, -gradient[other]) / gamma[other]
        events.append((step, int(state.ids[other]), LimitEvent.ERROR_TO_SUPPORT))

    alpha_c = state.alpha[position]
    if sens.direction > 0:
        # Case 3: the candidate's own gradient reaches zero.
        if sens.candidate_gamma > SENSITIVITY_FLOOR and c not in blocked:
            step = max(0.0, -gradient[position]) / sens.candidate_gamma
            event = (
                LimitEvent.CANDIDATE_TO_REMAINDER
                if sens.bias_only and alpha_c == 0
                else LimitEvent.CANDIDATE_TO_SUPPORT
            )
            events.append((step, c, event))
        # Case 4: the candidate saturates at C.
        if sens.candidate_rate > 0:
            events.append((max(0.0, state.C - alpha_c), c, LimitEvent.CANDIDATE_TO_ERROR))
    elif sens.candidate_rate < 0:
        events.append((max(0.0, alpha_c / -sens.candidate_rate), c, LimitEvent.CANDIDATE_RELEASED))
    elif alpha_c == 0:
        events.append((0.0, c, LimitEvent.CANDIDATE_RELEASED))

    if not events:
        raise NonConvergenceError(
            f"no bookkeeping event bounds the step for sample {c}; the problem diverges",
            state.diagnostics(),
        )
    shortest = min(step for step, _, _ in events)
    tied = [event for event in events if event[0] <= shortest + TIE_TOLERANCE]
    step, index, event = min(tied, key=lambda item: (item[1], EVENT_PRIORITY[item[2]]))
    return Increment(delta_alpha=step, event=event, index=index)


def _apply_step(state: IsvmState, c: int, sens: SensitivityPair, step: float) -> None:
    position = state.position(c)
    state.alpha[position] += sens.candidate_rate * step
    state.bias += sens.bias_rate * step
    if state.support:
        positions = state.support_positions()
        state.alpha[positions] = np.clip(
            state.alpha[positions] + sens.support_rates * step, 0.0, state.C
        )
    state.gradient += sens.gamma_margin * step


def _transition(state: IsvmState, c: int, increment: Increment, blocked: set[int]) -> bool:
    """Move the limiting sample between sets; return True when ``c`` is at rest."""

    position = state.position(increment.index)
    event = increment.event
    if event in (LimitEvent.SUPPORT_TO_REMAINDER, LimitEvent.SUPPORT_TO_ERROR):
        to_error = event == LimitEvent.SUPPORT_TO_ERROR
        state.alpha[position] = state.C if to_error else 0.0
        state.gradient[position] = 0.0
        state.membership[position] = ERROR if to_error else REMAINDER
        state._remove_from_border(increment.index)
        # A smaller border may admit samples that were dependent on it.
        blocked.clear()
        return False
    if event in (LimitEvent.REMAINDER_TO_SUPPORT, LimitEvent.ERROR_TO_SUPPORT):
        state.gradient[position] = 0.0
        try:
            state._add_to_border(position)
        except DegeneracyError as exc:
            blocked.add(increment.index)
            log_event(
                logger,
                "ISVM_DEGENERATE_SAMPLE",
                level=logging.WARNING,
                index=increment.index,
                reason=str(exc),
            )
            return False
        state.membership[position] = SUPPORT
        return False
    if event == LimitEvent.CANDIDATE_TO_SUPPORT:
        state.gradient[position] = 0.0
        try:
            state._add_to_border(position)
        except DegeneracyError as exc:
            # Linearly dependent candidates saturate at a box bound instead.
            blocked.add(c)
            log_event(
                logger,
                "ISVM_DEGENERATE_SAMPLE",
                level=logging.WARNING,
                index=c,
                reason=str(exc),
            )
            return False
        state.membership[position] = SUPPORT
        return True
    if event == LimitEvent.CANDIDATE_TO_REMAINDER:
        state.gradient[position] = 0.0
        state.membership[position] = REMAINDER
        return True
    if event == LimitEvent.CANDIDATE_TO_ERROR:
        state.alpha[position] = state.C
        state.membership[position] = ERROR
        return True
    state.alpha[position] = 0.0
    return True


def _iteration_guard(state: IsvmState, index: int, iterations: int) -> None:
    limit = ITERATION_FACTOR * max(1, len(state))
    if iterations > limit:
        diagnostics = {**state.diagnostics(), "index": index, "iterations": iterations}
        log_event(logger, "ISVM_NONCONVERGED", level=logging.ERROR, **diagnostics)
        raise NonConvergenceError(
            f"sample {index} did not settle within {limit} bookkeeping iterations",
            diagnostics,
        )


def _reanchor(state: IsvmState) -> None:
    """Re-solve bias and support coefficients from the current S/E/R sets.

    Rank-one updates accumulate rounding along a long stream. The inverse is
    refactorized once its residual against a fixed vector passes
    ``INVERSE_REFRESH``. The margin conditions on S and the equality
    constraint are then solved with one refinement step, and every gradient
    is recomputed.
    """

    if state.support:
        matrix = state.bordered_matrix()
        assert state.inverse is not None
        check = np.ones(matrix.shape[0], dtype=np.float64)
        residual = float(np.linalg.norm(matrix @ (state.inverse @ check) - check))
        if residual > INVERSE_REFRESH:
            try:
                state.inverse = np.linalg.inv(matrix)
            except np.linalg.LinAlgError as exc:
                raise DegeneracyError(f"bordered matrix is singular: {exc}") from exc
            log_event(
                logger,
                "ISVM_INVERSE_REBUILT",
                level=logging.DEBUG,
                reason="drift",
                residual=residual,
                support_size=len(state.support),
            )
        positions = state.support_positions()
        errors = np.flatnonzero(state.membership == ERROR)
        labels = state.labels[positions].astype(np.float64)
        rhs = np.empty(positions.shape[0] + 1, dtype=np.float64)
        rhs[0] = -state.C * float(state.labels[errors].sum())
        rhs[1:] = 1.0
        if errors.size:
            weights = state.C * state.labels[errors].astype(np.float64)
            rows = np.stack([state.row(position)[positions] for position in errors])
            rhs[1:] -= labels * (weights @ rows)
        solution = state.inverse @ rhs
        solution += state.inverse @ (rhs - matrix @ solution)
        state.bias = float(solution[0])
        state.alpha[positions] = np.clip(solution[1:], 0.0, state.C)
    state.gradient = state.fresh_gradients()


def learn_sample(state: IsvmState, sample: Sample) -> IsvmState:
    position = state._append(sample)
    index = int(state.ids[position])
    if len(state) == 1:
        state.bias = float(sample.label)
    state.gradient[position] = margin_gradient(state, index)
    if state.gradient[position] >= -KKT_TOLERANCE:
        state.membership[position] = REMAINDER
        return state

    blocked: set[int] = set()
    iterations = 0
    while True:
        iterations += 1
        _iteration_guard(state, index, iterations)
        sens = sensitivities(state, index, direction=1)
        increment = max_increment(state, index, sens, blocked=blocked)
        _apply_step(state, index, sens, increment.delta_alpha)
        if _transition(state, index, increment, blocked):
            _reanchor(state)
            return state


def learn_many(state: IsvmState, samples: Iterable[Sample]) -> IsvmState:
    for sample in samples:
        learn_sample(state, sample)
    return state


def unlearn_sample(state: IsvmState, i: int) -> IsvmState:
    position = state.position(i)
    if state.alpha[position] == 0:
        if i in state.support:
            state._remove_from_border(i)
        state._delete(position)
        return state
    if i in state.support:
        state._remove_from_border(i)
    state.membership[position] = CANDIDATE

    blocked: set[int] = set()
    iterations = 0
    while True:
        iterations += 1
        _iteration_guard(state, i, iterations)
        sens = sensitivities(state, i, direction=-1)
        increment = max_increment(state, i, sens, blocked=blocked)
        _apply_step(state, i, sens, increment.delta_alpha)
        if _transition(state, i, increment, blocked):
            break
    state._delete(state.position(i))
    _reanchor(state)
    return state


def dual_objective(state: IsvmState) -> float:
    active = np.flatnonzero(state.alpha > 0)
    if not active.size:
        return 0.0
    weights = state.alpha[active] * state.labels[active]
    quadratic = 0.0
    for weight, position in zip(weights, active, strict=True):
        quadratic += weight * float(weights @ state.row(position)[active])
    return float(state.alpha[active].sum() - 0.5 * quadratic)
