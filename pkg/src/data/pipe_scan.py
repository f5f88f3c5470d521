"""Synthetic pipe-scan profiles: one revolution of beam distances per sample.

Healthy samples are the nominal radius plus Gaussian noise. Defected
samples carry one contiguous arc (wrapping around the revolution) pushed
outward (dent) or inward (bulge) by a random depth, and are labeled -1.
"""

from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.svm.core import DEFECTED, HEALTHY, Dataset


class PipeScanConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_samples: int = Field(default=1000, ge=1)
    beams_per_revolution: int = Field(default=180, ge=1)
    nominal_radius: float = Field(default=1.0, gt=0)
    noise_sigma: float = Field(default=0.01, ge=0)
    defect_rate: float = Field(default=0.3, ge=0, le=1)
    defect_depth_range: tuple[float, float] = (0.05, 0.3)
    defect_width_range: tuple[int, int] = (3, 20)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def validate_ranges(self) -> PipeScanConfig:
        low, high = self.defect_depth_range
        if not 0 < low <= high < self.nominal_radius:
            raise ValueError("defect_depth_range must satisfy 0 < low <= high < nominal_radius")
        narrow, wide = self.defect_width_range
        if not 1 <= narrow <= wide <= self.beams_per_revolution:
            raise ValueError(
                "defect_width_range must satisfy 1 <= low <= high <= beams_per_revolution"
            )
        return self


def generate_pipe_scan(config: PipeScanConfig) -> Dataset:
    rng = np.random.default_rng(config.seed)
    beams = config.beams_per_revolution
    features = np.empty((config.n_samples, beams), dtype=np.float64)
    labels = np.full(config.n_samples, HEALTHY, dtype=np.int64)
    for position in range(config.n_samples):
        profile = config.nominal_radius + rng.normal(0.0, config.noise_sigma, beams)
        if rng.random() < config.defect_rate:
            narrow, wide = config.defect_width_range
            width = int(rng.integers(narrow, wide + 1))
            depth = float(rng.uniform(*config.defect_depth_range))
            start = int(rng.integers(0, beams))
            arc = (start + np.arange(width)) % beams
            direction = 1.0 if rng.random() < 0.5 else -1.0
            profile[arc] += direction * depth
            labels[position] = DEFECTED
        features[position] = np.clip(profile, 0.0, None)
    return Dataset(features=features, labels=labels)
