"""K-fold cross-validated grid search over C, kernel, gamma and tau."""

from __future__ import annotations

import io
import logging
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat

from src.common.files import atomic_write_text
from src.common.logging_config import log_event
from src.evaluation.metrics import accuracy_score
from src.evaluation.trainers import TrainerKind, train_model
from src.svm.core import Dataset, decision_values
from src.svm.errors import ConfigurationError
from src.svm.kernel import AUTO, KernelKind, KernelSpec
from src.svm.lasvm import EpochSchedule

logger = logging.getLogger(__name__)

GRID_CSV_COLUMNS = ["config_id", "C", "kernel", "gamma", "tau", "mean_val_acc", "std_val_acc"]


class GridSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    C_values: list[PositiveFloat] = Field(min_length=1)
    kernel_kinds: list[KernelKind] = Field(min_length=1)
    gamma_values: list[PositiveFloat | Literal["auto"]] = Field(min_length=1)
    tau_values: list[PositiveFloat] = Field(min_length=1)
    folds: int = Field(default=5, ge=2)
    degree: int = Field(default=3, ge=1)
    coef0: float = 0.0

    @classmethod
    def from_file(cls, path: Path) -> GridSpec:
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class GridConfig:
    config_id: int
    C: float
    kernel: KernelSpec
    tau: float | None


class GridScore(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    config_id: int
    C: float
    kernel: str
    gamma: str
    tau: float | None
    fold_accuracies: list[float]
    mean_val_acc: float | None
    std_val_acc: float | None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


class GridSearchResult(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    trainer: TrainerKind
    best: GridScore
    scores: list[GridScore]


def enumerate_configs(grid: GridSpec, trainer: TrainerKind) -> list[GridConfig]:
    """C outermost, then kernel, gamma and tau; tau collapses for trainers without it."""

    taus: list[float | None] = list(grid.tau_values) if trainer.uses_tau else [None]
    configs: list[GridConfig] = []
    for C in grid.C_values:
        for kind in grid.kernel_kinds:
            for gamma in grid.gamma_values:
                kernel = KernelSpec(
                    kind=kind,
                    gamma=None if gamma == AUTO else float(gamma),
                    degree=grid.degree,
                    coef0=grid.coef0,
                )
                for tau in taus:
                    configs.append(GridConfig(len(configs), float(C), kernel, tau))
    return configs


def fold_assignments(n: int, folds: int, seed: int) -> list[np.ndarray]:
    if n < folds:
        raise ConfigurationError(f"{n} samples cannot fill {folds} folds")
    order = np.random.default_rng(seed).permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(order, folds)]


def _run_cell(
    dataset: Dataset,
    config: GridConfig,
    trainer: TrainerKind,
    held_out: np.ndarray,
    training: np.ndarray,
    schedule: EpochSchedule,
) -> float:
    model = train_model(
        trainer,
        dataset.subset(training),
        C=config.C,
        kernel=config.kernel,
        tau=config.tau,
        schedule=schedule,
    )
    validation = dataset.subset(held_out)
    return accuracy_score(validation.labels, decision_values(model, validation))


def _gamma_text(kernel: KernelSpec) -> str:
    return AUTO if kernel.gamma is None else repr(kernel.gamma)


def grid_search(
    dataset: Dataset,
    grid: GridSpec,
    trainer: TrainerKind,
    seed: int,
    *,
    workers: int = 1,
    schedule: EpochSchedule | None = None,
) -> GridSearchResult:
    schedule = schedule or EpochSchedule(shuffle_seed=seed)
    configs = enumerate_configs(grid, trainer)
    folds = fold_assignments(len(dataset), grid.folds, seed)
    all_positions = np.arange(len(dataset))
    cells: dict[tuple[int, int], Future[float]] = {}

    with ThreadPoolExecutor(
        max_workers=max(1, workers),
        thread_name_prefix="svm-grid",
    ) as executor:
        for config in configs:
            for fold_number, held_out in enumerate(folds):
                training = np.setdiff1d(all_positions, held_out)
                cells[(config.config_id, fold_number)] = executor.submit(
                    _run_cell, dataset, config, trainer, held_out, training, schedule
                )

        scores: list[GridScore] = []
        for config in configs:
            accuracies: list[float] = []
            error: str | None = None
            for fold_number in range(len(folds)):
                try:
                    accuracies.append(cells[(config.config_id, fold_number)].result())
                except Exception as exc:
                    error = f"{type(exc).__name__}: {exc}"
                    log_event(
                        logger,
                        "GRID_CELL_FAILED",
                        level=logging.WARNING,
                        config_id=config.config_id,
                        fold=fold_number,
                        error=error,
                    )
            failed = error is not None
            score = GridScore(
                config_id=config.config_id,
                C=config.C,
                kernel=config.kernel.kind.value,
                gamma=_gamma_text(config.kernel),
                tau=config.tau,
                fold_accuracies=accuracies,
                mean_val_acc=None if failed else float(np.mean(accuracies)),
                std_val_acc=None if failed else float(np.std(accuracies)),
                error=error,
            )
            scores.append(score)
            log_event(
                logger,
                "GRID_CONFIG_DONE",
                level=logging.DEBUG,
                config_id=config.config_id,
                mean_val_acc=score.mean_val_acc,
                failed=failed,
            )

    best: GridScore | None = None
    for score in scores:
        if score.mean_val_acc is None:
            continue
        if best is None or score.mean_val_acc > best.mean_val_acc:  # type: ignore[operator]
            best = score
    if best is None:
        raise ConfigurationError("every grid configuration failed to train")
    return GridSearchResult(trainer=trainer, best=best, scores=scores)


def grid_frame(result: GridSearchResult) -> pd.DataFrame:
    return pd.DataFrame(
        [score.model_dump(include=set(GRID_CSV_COLUMNS)) for score in result.scores],
        columns=GRID_CSV_COLUMNS,
    )


def write_grid_csv(result: GridSearchResult, path: Path) -> None:
    buffer = io.StringIO()
    grid_frame(result).to_csv(buffer, index=False, lineterminator="\n")
    atomic_write_text(Path(path), buffer.getvalue())
