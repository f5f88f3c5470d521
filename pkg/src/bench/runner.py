"""Streaming runs with periodic checkpoints, and the artifacts they produce."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from pathlib import Path

import pandas as pd

from src.bench.checkpoint import Checkpoint, RunParameters, TrainerState, save_checkpoint
from src.common.files import atomic_write_text, sha256_file
from src.common.logging_config import log_event
from src.data.sparse_text import load_dataset
from src.data.splits import split
from src.evaluation.metrics import MetricsReport, evaluate
from src.evaluation.trainers import TrainerKind, new_cache, ordered_stream
from src.svm.core import Dataset, Model, model_to_json
from src.svm.errors import ConfigurationError, DataFormatError
from src.svm.isvm import IsvmState, learn_sample
from src.svm.kernel import KernelSpec
from src.svm.lasvm import DEFAULT_TAU, LasvmState, train_online

logger = logging.getLogger(__name__)

METRICS_CSV_COLUMNS = ["split", "accuracy", "log_loss", "roc_auc", "f1", "n_samples"]


@dataclass(frozen=True)
class RunSplits:
    train: Dataset
    validation: Dataset
    test: Dataset


@dataclass(frozen=True)
class StreamOutcome:
    state: TrainerState
    position: int
    total: int
    model: Model | None

    @property
    def complete(self) -> bool:
        return self.position >= self.total


def load_run_splits(run: RunParameters, *, check_fingerprint: bool = True) -> RunSplits:
    path = Path(run.data_path)
    if check_fingerprint:
        digest = sha256_file(path)
        if digest != run.data_sha256:
            raise DataFormatError(
                f"{path} changed since the run started (sha256 {digest} != {run.data_sha256})"
            )
    train, validation, test = split(load_dataset(path, remap_binary=run.remap_binary), run.split)
    return RunSplits(train=train, validation=validation, test=test)


def new_state(run: RunParameters) -> TrainerState:
    kernel = KernelSpec.parse(run.kernel)
    if run.trainer is TrainerKind.ISVM:
        return IsvmState(run.C, kernel, cache=new_cache())
    if run.trainer is TrainerKind.LASVM:
        tau = run.tau if run.tau is not None else DEFAULT_TAU
        return LasvmState(run.C, tau, kernel, cache=new_cache())
    raise ConfigurationError("only the isvm and lasvm trainers can stream")


def stream_length(run: RunParameters, train: Dataset) -> int:
    if run.trainer is TrainerKind.ISVM:
        if run.passes != 1:
            raise ConfigurationError("isvm keeps every sample and streams exactly one pass")
        return len(train)
    return len(train) * run.passes


def run_stream(
    run: RunParameters,
    *,
    state: TrainerState | None = None,
    position: int = 0,
    stop_after: int | None = None,
) -> StreamOutcome:
    """Consume the training stream from ``position``; checkpoint every N samples.

    ``stop_after`` ends the run early once that many stream samples have
    been consumed; a checkpoint is always written at the stopping point
    when a checkpoint path is configured.
    """

    splits = load_run_splits(run)
    total = stream_length(run, splits.train)
    stop = total if stop_after is None else min(stop_after, total)
    state = state if state is not None else new_state(run)
    checkpoint_path = Path(run.checkpoint_path) if run.checkpoint_path else None
    schedule = run.schedule()

    def after_sample(current: TrainerState, at: int) -> None:
        consumed = at + 1
        due = run.checkpoint_every is not None and consumed % run.checkpoint_every == 0
        if checkpoint_path is not None and (due or consumed == stop):
            save_checkpoint(Checkpoint(run=run, position=consumed, state=current), checkpoint_path)
        if due or consumed == stop:
            log_event(
                logger,
                "STREAM_PROGRESS",
                trainer=run.trainer.value,
                position=consumed,
                total=total,
                stored=len(current),
            )

    if isinstance(state, IsvmState):
        stream = ordered_stream(splits.train, schedule)
        for at in range(position, stop):
            learn_sample(state, stream.sample(at))
            after_sample(state, at)
    else:
        train_online(
            state,
            splits.train,
            schedule,
            start=position,
            stop=stop,
            after_sample=after_sample,
        )

    if stop < total:
        return StreamOutcome(state=state, position=stop, total=total, model=None)
    model = state.to_model()
    write_artifacts(run, model, splits)
    return StreamOutcome(state=state, position=stop, total=total, model=model)


def metrics_frame(reports: dict[str, MetricsReport]) -> pd.DataFrame:
    return pd.DataFrame(
        [{"split": name, **report.model_dump()} for name, report in reports.items()],
        columns=METRICS_CSV_COLUMNS,
    )


def split_reports(model: Model, splits: RunSplits) -> dict[str, MetricsReport]:
    reports: dict[str, MetricsReport] = {}
    for name, dataset in (("validation", splits.validation), ("test", splits.test)):
        if len(dataset):
            reports[name] = evaluate(model, dataset, allow_undefined_auc=True)
    return reports


def write_metrics_csv(reports: dict[str, MetricsReport], path: Path) -> None:
    buffer = io.StringIO()
    metrics_frame(reports).to_csv(buffer, index=False, lineterminator="\n")
    atomic_write_text(Path(path), buffer.getvalue())


def write_model(model: Model, path: Path) -> None:
    atomic_write_text(Path(path), model_to_json(model) + "\n")


def write_artifacts(run: RunParameters, model: Model, splits: RunSplits) -> None:
    if run.model_out:
        write_model(model, Path(run.model_out))
    if run.metrics_out:
        write_metrics_csv(split_reports(model, splits), Path(run.metrics_out))
