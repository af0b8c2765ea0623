"""Shared epoch loop: AdamW updates, validation, early stopping and reporting."""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from loguru import logger

from ..config import RunConfig
from ..data.split import DataSplit
from ..evaluation.metrics import evaluate
from ..losses import LossValue
from ..models.base import assert_finite
from ..protocols import Recommender
from ..sampling import TripleSampler
from ..stats_tracker import TrainingStats
from ..workers import ChunkedPool
from .early_stopping import EarlyStopping
from .optimizer import AdamW
from .report import EpochRecord, TrainReport

__all__ = ["EpochLosses", "EpochTrainer"]

REPORT_K = 20


@dataclass(frozen=True, kw_only=True)
class EpochLosses:
    """Mean per-sample losses of one epoch."""

    total: float
    kd: float = 0.0
    rec: float = 0.0
    phase: str = "train"


class EpochTrainer(ABC):
    """Owns one model, its optimizer and its early stopping state."""

    def __init__(self, model: Recommender, split: DataSplit, cfg: RunConfig, *, tag: str, rng: np.random.Generator, pool: ChunkedPool | None = None) -> None:
        """Initialize the trainer.

        Args:
            model: Model updated in place.
            split: Train positives feed the samplers; valid drives early stopping.
            cfg: Run configuration.
            tag: Report and log name of the model.
            rng: Generator for every sampling decision of this trainer.
            pool: Optional worker pool.

        """
        super().__init__()
        self.model = model
        self.split = split
        self.cfg = cfg
        self.tag = tag
        self.rng = rng
        self.pool = pool
        self.sampler = TripleSampler(split.train)
        self.optimizer = AdamW(model.params, lr=cfg.train.lr, weight_decay=cfg.train.weight_decay)
        self.stopper = EarlyStopping(cfg.train.patience)
        self.stats = TrainingStats()
        self.report = TrainReport(model=tag)
        self.epoch = 0
        self.stopped = False

    @property
    def n_batches(self) -> int:
        return max(1, math.ceil(self.sampler.n_train / self.cfg.train.batch_size))

    def apply(self, loss: LossValue) -> None:
        """One optimizer step followed by cache invalidation."""
        self.optimizer.step(loss.grad)
        self.model.invalidate()

    @abstractmethod
    def train_epoch(self) -> EpochLosses:
        """Run the batches of ``self.epoch``."""

    def validate(self) -> tuple[float, float, float]:
        """Validation ``(stopping score, Recall@20, NDCG@20)``."""
        k = self.cfg.eval.validation_k
        rows = {row.k: row for row in evaluate(self.model, self.split, sorted({k, REPORT_K}), part="valid", pool=self.pool)}
        return rows[k].recall, rows[REPORT_K].recall, rows[REPORT_K].ndcg

    def step_epoch(self) -> bool:
        """Train and validate one epoch; returns False once training is over."""
        if self.stopped or self.epoch >= self.cfg.train.max_epochs:
            self.stopped = True
            return False
        self.epoch += 1
        losses = self.train_epoch()
        assert_finite(self.model)
        score, recall20, ndcg20 = self.validate()
        self.report.add(EpochRecord(epoch=self.epoch, loss=losses.total, recall20=recall20, ndcg20=ndcg20, phase=losses.phase, kd_loss=losses.kd, rec_loss=losses.rec))
        logger.info(f"[{self.tag}] epoch {self.epoch} ({losses.phase}): loss {losses.total:.5f}, Recall@20 {recall20:.4f}, NDCG@20 {ndcg20:.4f}")
        if self.stopper.record(self.epoch, score, self.model.params):
            self.report.stopped_early = True
            self.stopped = True
        elif self.epoch >= self.cfg.train.max_epochs:
            self.stopped = True
        return not self.stopped

    def finalize(self) -> TrainReport:
        """Restore the best parameters and close the report."""
        self.stopper.restore(self.model)
        self.report.finish(best_epoch=self.stopper.best_epoch, stopped_early=self.report.stopped_early, counters=self.stats.get_stats())
        logger.info(f"✅ [{self.tag}] best epoch {self.stopper.best_epoch} of {self.epoch}")
        return self.report

    def fit(self) -> TrainReport:
        """Train until early stopping or ``max_epochs``."""
        while self.step_epoch():
            pass
        return self.finalize()
