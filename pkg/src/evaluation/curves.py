"""Learning curves: accuracy and cumulative training time against samples seen."""

from __future__ import annotations

import io
import logging
import time
from collections.abc import Sequence
from pathlib import Path

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from src.common.files import atomic_write_text
from src.common.logging_config import log_event
from src.evaluation.metrics import accuracy_score
from src.evaluation.trainers import TrainerKind, new_cache, ordered_stream
from src.svm.batch_smo import SmoConfig, solve
from src.svm.core import Dataset, Model, decision_values
from src.svm.errors import ConfigurationError
from src.svm.isvm import IsvmState, learn_sample
from src.svm.kernel import KernelSpec
from src.svm.lasvm import DEFAULT_TAU, EpochSchedule, LasvmState, train_online

logger = logging.getLogger(__name__)

CURVE_CSV_COLUMNS = ["n_samples", "seconds", "val_acc", "test_acc", "sv_count"]


class CurvePoint(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_samples_seen: int = Field(ge=1)
    cumulative_train_seconds: float = Field(ge=0)
    validation_accuracy: float | None = Field(default=None, ge=0, le=1)
    test_accuracy: float | None = Field(default=None, ge=0, le=1)
    support_set_size: int = Field(ge=0)


def _accuracy(model: Model, dataset: Dataset) -> float | None:
    if not len(dataset):
        return None
    return accuracy_score(dataset.labels, decision_values(model, dataset))


def _check_checkpoints(checkpoints: Sequence[int], limit: int) -> list[int]:
    points = [int(point) for point in checkpoints]
    if not points:
        raise ConfigurationError("at least one curve checkpoint is required")
    if any(later <= earlier for earlier, later in zip(points, points[1:], strict=False)):
        raise ConfigurationError(f"curve checkpoints must be strictly increasing: {points}")
    if points[0] < 1 or points[-1] > limit:
        raise ConfigurationError(f"curve checkpoints must lie within 1..{limit}: {points}")
    return points


def learning_curve(
    trainer: TrainerKind,
    train: Dataset,
    validation: Dataset,
    test: Dataset,
    checkpoints: Sequence[int],
    *,
    C: float,
    kernel: KernelSpec,
    tau: float = DEFAULT_TAU,
    schedule: EpochSchedule | None = None,
) -> list[CurvePoint]:
    """Train on the stream and snapshot the model at each checkpoint.

    Online trainers continue from the previous checkpoint; the SMO baseline
    retrains from scratch on the first ``n`` stream samples. Evaluation time
    is excluded from the cumulative seconds.
    """

    schedule = schedule or EpochSchedule()
    points = _check_checkpoints(checkpoints, len(train))
    stream = ordered_stream(train, schedule)
    curve: list[CurvePoint] = []
    elapsed = 0.0
    seen = 0
    isvm = IsvmState(C, kernel, cache=new_cache()) if trainer is TrainerKind.ISVM else None
    lasvm = LasvmState(C, tau, kernel, cache=new_cache()) if trainer is TrainerKind.LASVM else None

    for point in points:
        began = time.perf_counter()
        if isvm is not None:
            for position in range(seen, point):
                learn_sample(isvm, stream.sample(position))
            model = isvm.to_model()
            support = len(isvm.support)
        elif lasvm is not None:
            train_online(lasvm, train, schedule, start=seen, stop=point)
            model = lasvm.to_model()
            support = int(model.coefficients.size)
        else:
            model = solve(stream.subset(range(point)), SmoConfig(C=C, kernel=kernel))
            support = int(model.coefficients.size)
        spent = time.perf_counter() - began
        elapsed = spent if trainer is TrainerKind.SMO else elapsed + spent
        seen = point
        log_event(
            logger,
            "TRAINING_TIMING",
            level=logging.DEBUG,
            trainer=trainer.value,
            n_samples=point,
            seconds=elapsed,
        )
        curve.append(
            CurvePoint(
                n_samples_seen=point,
                cumulative_train_seconds=elapsed,
                validation_accuracy=_accuracy(model, validation),
                test_accuracy=_accuracy(model, test),
                support_set_size=support,
            )
        )
    return curve


def curve_frame(points: Sequence[CurvePoint]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "n_samples": point.n_samples_seen,
                "seconds": point.cumulative_train_seconds,
                "val_acc": point.validation_accuracy,
                "test_acc": point.test_accuracy,
                "sv_count": point.support_set_size,
            }
            for point in points
        ],
        columns=CURVE_CSV_COLUMNS,
    )


def write_curve_csv(points: Sequence[CurvePoint], path: Path) -> None:
    buffer = io.StringIO()
    curve_frame(points).to_csv(buffer, index=False, lineterminator="\n")
    atomic_write_text(Path(path), buffer.getvalue())
