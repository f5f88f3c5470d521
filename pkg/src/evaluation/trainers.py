"""Uniform entry point for the three trainers used by grid search, curves and the CLI."""

from __future__ import annotations

from enum import StrEnum

from src.common.settings import settings
from src.data.splits import stream_order
from src.svm.batch_smo import SmoConfig, solve
from src.svm.core import Dataset, Model
from src.svm.isvm import IsvmState, learn_sample
from src.svm.kernel import KernelCache, KernelSpec
from src.svm.lasvm import DEFAULT_TAU, EpochSchedule, LasvmState, train_online


class TrainerKind(StrEnum):
    ISVM = "isvm"
    LASVM = "lasvm"
    SMO = "smo"

    @classmethod
    def parse(cls, text: str) -> TrainerKind:
        # "batch" and "offline" name the SMO baseline in grid files.
        aliases = {"batch": cls.SMO, "offline": cls.SMO}
        key = text.strip().casefold()
        return aliases.get(key) or cls(key)

    @property
    def uses_tau(self) -> bool:
        return self is TrainerKind.LASVM


def new_cache() -> KernelCache:
    return KernelCache(settings.kernel_cache_bytes)


def ordered_stream(dataset: Dataset, schedule: EpochSchedule) -> Dataset:
    """The dataset rearranged into the epoch-shuffled order the online trainers consume."""

    epochs = stream_order(len(dataset), schedule.epoch_size, schedule.shuffle_seed)
    positions = [int(position) for epoch in epochs for position in epoch]
    return dataset.subset(positions)


def train_model(
    kind: TrainerKind,
    dataset: Dataset,
    *,
    C: float,
    kernel: KernelSpec,
    tau: float | None = None,
    schedule: EpochSchedule | None = None,
) -> Model:
    schedule = schedule or EpochSchedule()
    if kind is TrainerKind.LASVM:
        state = LasvmState(C, tau if tau is not None else DEFAULT_TAU, kernel, cache=new_cache())
        train_online(state, dataset, schedule)
        return state.to_model()
    if kind is TrainerKind.ISVM:
        isvm = IsvmState(C, kernel, cache=new_cache())
        for sample in ordered_stream(dataset, schedule):
            learn_sample(isvm, sample)
        return isvm.to_model()
    return solve(dataset, SmoConfig(C=C, kernel=kernel))
