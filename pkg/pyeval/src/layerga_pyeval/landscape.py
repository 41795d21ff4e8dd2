"""Closed-form accuracy landscapes standing in for a real fine-tuning run."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Landscape:
    """Sum of Gaussian peaks over (l_start, l_end), clamped into [0, 1]."""

    centers: tuple[tuple[float, float], ...] = ((129.0, 151.0),)
    base: float = 0.5
    amplitudes: tuple[float, ...] = (0.47,)
    sigma: float = 10.0

    def __post_init__(self) -> None:
        if len(self.centers) != len(self.amplitudes) or not self.centers:
            raise ValueError("need one amplitude per center, at least one center")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.base < 0 or self.base + max(self.amplitudes) > 1.0:
            raise ValueError("base must be >= 0 and base + max amplitude <= 1")

    def accuracy(self, l_start: int, l_end: int) -> float:
        acc = self.base
        two_sigma_sq = 2.0 * self.sigma * self.sigma
        for (a, b), amp in zip(self.centers, self.amplitudes):
            d2 = (l_start - a) ** 2 + (l_end - b) ** 2
            acc += amp * math.exp(-d2 / two_sigma_sq)
        return min(1.0, max(0.0, acc))


PRESETS = {
    "unimodal": Landscape(),
    "flat": Landscape(amplitudes=(0.0,)),
    "bimodal": Landscape(
        centers=((129.0, 151.0), (40.0, 70.0)),
        amplitudes=(0.47, 0.35),
    ),
}


@dataclass(frozen=True)
class WorkerConfig:
    landscape: Landscape = Landscape()
    deterministic: bool = True
    latency_ms: float = 0.0


def train_hook(config: WorkerConfig, l_start: int, l_end: int) -> float:
    """Measure one window's accuracy.

    Stub: evaluates the configured landscape.  A real deployment would
    fine-tune the transfer model with exactly this window trainable and
    report the measured test accuracy instead.
    """
    return config.landscape.accuracy(l_start, l_end)
