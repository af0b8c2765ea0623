"""Training reports: JSON summary plus a per-epoch CSV curve."""

import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import pandas as pd
import psutil

from ..artifacts import write_frame_atomic, write_json_atomic

__all__ = ["EpochRecord", "TrainReport"]


@dataclass(frozen=True, kw_only=True)
class EpochRecord:
    """Losses and validation metrics of one epoch."""

    epoch: int
    loss: float
    recall20: float
    ndcg20: float
    phase: str = "train"
    kd_loss: float = 0.0
    rec_loss: float = 0.0


@dataclass(kw_only=True)
class TrainReport:
    """Per-epoch history of one model's training run."""

    model: str
    epochs: list[EpochRecord] = field(default_factory=lambda: list[EpochRecord]())
    best_epoch: int = 0
    stopped_early: bool = False
    wall_clock: float = 0.0
    counters: dict[str, int] = field(default_factory=lambda: dict[str, int]())
    peak_rss_mb: float = 0.0
    _started: float = field(default_factory=time.perf_counter, repr=False)

    def add(self, record: EpochRecord) -> None:
        self.epochs.append(record)
        self.peak_rss_mb = max(self.peak_rss_mb, psutil.Process().memory_info().rss / (1024 * 1024))

    def finish(self, *, best_epoch: int, stopped_early: bool, counters: dict[str, int]) -> None:
        """Close the report once training ends."""
        if best_epoch > len(self.epochs):
            raise ValueError(f"Best epoch {best_epoch} exceeds the {len(self.epochs)} recorded epochs")
        self.best_epoch = best_epoch
        self.stopped_early = stopped_early
        self.counters = dict(counters)
        self.wall_clock = time.perf_counter() - self._started

    @property
    def best_record(self) -> EpochRecord | None:
        return next((r for r in self.epochs if r.epoch == self.best_epoch), None)

    def to_dict(self) -> dict[str, Any]:
        """JSON payload; the wall clock is the only non-deterministic field."""
        return {
            "model": self.model,
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
            "n_epochs": len(self.epochs),
            "wall_clock_seconds": self.wall_clock,
            "peak_rss_mb": self.peak_rss_mb,
            "counters": self.counters,
            "epochs": [vars(r) for r in self.epochs],
        }

    def curve(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "epoch": [r.epoch for r in self.epochs],
                "loss": [r.loss for r in self.epochs],
                "recall20": [r.recall20 for r in self.epochs],
                "ndcg20": [r.ndcg20 for r in self.epochs],
            }
        )

    def write(self, directory: str | os.PathLike[str]) -> tuple[Path, Path]:
        """Write ``<model>_report.json`` and ``<model>_curve.csv`` into ``directory``."""
        target = Path(directory)
        json_path = write_json_atomic(target / f"{self.model}_report.json", self.to_dict())
        csv_path = write_frame_atomic(target / f"{self.model}_curve.csv", self.curve())
        return json_path, csv_path
