"""Versioned, checksummed trainer checkpoints.

Layout (big-endian)::

    b"SSVM" | version:u32 | payload_length:u64 | payload | sha256(all preceding bytes)

The payload is canonical JSON (sorted keys, compact separators), so
save/load/save reproduces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.common.files import atomic_write_bytes, canonical_json_bytes
from src.common.logging_config import log_event
from src.data.splits import SplitSpec
from src.evaluation.trainers import TrainerKind, new_cache
from src.svm.errors import CheckpointCorruptError, UnsupportedVersionError
from src.svm.isvm import INVERSE_TOLERANCE, IsvmState
from src.svm.lasvm import EpochSchedule, LasvmState

logger = logging.getLogger(__name__)

MAGIC = b"SSVM"
FORMAT_VERSION = 1
HEADER = struct.Struct(">4sIQ")
DIGEST_SIZE = hashlib.sha256().digest_size


class RunParameters(BaseModel):
    """Everything needed to continue a streaming run without other flags."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    trainer: TrainerKind
    data_path: str
    data_sha256: str
    remap_binary: bool = False
    split: SplitSpec = Field(default_factory=SplitSpec)
    kernel: str = "rbf?gamma=auto"
    C: float = Field(default=100.0, gt=0)
    tau: float | None = Field(default=None, gt=0)
    epoch_size: int = Field(default=200, ge=1)
    epochs_before_finish: int = Field(default=5, ge=1)
    passes: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0)
    checkpoint_path: str | None = None
    checkpoint_every: int | None = Field(default=None, ge=1)
    model_out: str | None = None
    metrics_out: str | None = None

    def schedule(self) -> EpochSchedule:
        return EpochSchedule(
            epoch_size=self.epoch_size,
            epochs_before_finish=self.epochs_before_finish,
            shuffle_seed=self.seed,
            passes=self.passes,
        )


TrainerState = IsvmState | LasvmState


@dataclass(frozen=True)
class Checkpoint:
    run: RunParameters
    position: int
    state: TrainerState


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    payload = canonical_json_bytes(
        {
            "position": checkpoint.position,
            "run": checkpoint.run.model_dump(mode="json"),
            "state": checkpoint.state.to_payload(),
        }
    )
    body = HEADER.pack(MAGIC, FORMAT_VERSION, len(payload)) + payload
    return body + hashlib.sha256(body).digest()


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> int:
    data = encode_checkpoint(checkpoint)
    atomic_write_bytes(Path(path), data)
    log_event(
        logger,
        "CHECKPOINT_SAVED",
        path=str(path),
        position=checkpoint.position,
        trainer=checkpoint.run.trainer.value,
        bytes=len(data),
    )
    return len(data)


def decode_checkpoint(data: bytes) -> dict[str, Any]:
    if len(data) < HEADER.size + DIGEST_SIZE:
        raise CheckpointCorruptError("checkpoint is truncated")
    magic, version, length = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointCorruptError("not a checkpoint file (bad magic bytes)")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    if len(data) != HEADER.size + length + DIGEST_SIZE:
        raise CheckpointCorruptError("checkpoint length does not match its header")
    body = data[: HEADER.size + length]
    if hashlib.sha256(body).digest() != data[HEADER.size + length :]:
        raise CheckpointCorruptError("checkpoint checksum mismatch")
    try:
        return json.loads(body[HEADER.size :].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointCorruptError(f"checkpoint payload is unreadable: {exc}") from exc


def load_checkpoint(path: Path) -> Checkpoint:
    document = decode_checkpoint(Path(path).read_bytes())
    try:
        run = RunParameters.model_validate(document["run"])
        position = int(document["position"])
        payload = document["state"]
        state: TrainerState
        if run.trainer is TrainerKind.ISVM:
            state = IsvmState.from_payload(payload, cache=new_cache())
        elif run.trainer is TrainerKind.LASVM:
            state = LasvmState.from_payload(payload, cache=new_cache())
        else:
            raise CheckpointCorruptError(f"trainer {run.trainer.value!r} cannot be checkpointed")
    except (KeyError, TypeError, ValueError, ValidationError) as exc:
        if isinstance(exc, CheckpointCorruptError):
            raise
        raise CheckpointCorruptError(f"checkpoint payload is malformed: {exc}") from exc

    if isinstance(state, IsvmState):
        residual = state.inverse_residual()
        if residual > INVERSE_TOLERANCE:
            state.rebuild_inverse()
            log_event(
                logger,
                "CHECKPOINT_INVERSE_REBUILT",
                level=logging.WARNING,
                path=str(path),
                residual=residual,
            )
    return Checkpoint(run=run, position=position, state=state)
