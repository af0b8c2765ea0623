"""Student training: pointwise BCE plus distillation from a frozen teacher."""

import math
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
from loguru import logger

from ..config import KdKind, RunConfig
from ..data.split import DataSplit
from ..losses import LossValue, pointwise_loss
from ..otkd.distill import distill, kd_parameter_grad, pairwise_logits
from ..partition import UserPartition
from ..protocols import Recommender
from ..sampling import DegeneratePartitionError, PointwiseBatch, TripleSampler, Triples
from ..stats_tracker import TrainingStats
from ..workers import ChunkedPool
from .loop import EpochLosses, EpochTrainer
from .report import TrainReport

__all__ = ["DistillationTrainer", "StudentLoss", "kd_triples", "student_batch_loss", "train_student"]


@dataclass(frozen=True, kw_only=True)
class StudentLoss:
    """One batch of the student objective; ``total.value == kd + rec``."""

    kd: float
    rec: float
    total: LossValue


def kd_triples(
    sampler: TripleSampler,
    partitions: Mapping[int, UserPartition] | None,
    n: int,
    rng: np.random.Generator,
    stats: TrainingStats | None = None,
) -> Triples:
    """Clean/noisy triples from the partitions, or uniform negatives when there are none."""
    if partitions:
        try:
            return sampler.from_partitions(partitions, n, rng)
        except DegeneratePartitionError:
            if stats is not None:
                stats.increment("bpr_fallbacks")
    return sampler.uniform(n, rng)


def student_batch_loss(
    student: Recommender,
    teacher: Recommender | None,
    batch: PointwiseBatch,
    triples: Triples | None,
    cfg: RunConfig,
    *,
    stats: TrainingStats | None = None,
    pool: ChunkedPool | None = None,
) -> StudentLoss:
    """``kd_weight * L_KD + L_Rec`` for one batch with gradients for the student only."""
    rec = pointwise_loss(student, batch)
    if teacher is None or triples is None or cfg.train.kd is KdKind.NONE:
        return StudentLoss(kd=0.0, rec=rec.value, total=rec)

    weight = cfg.train.kd_weight
    z_t = pairwise_logits(teacher, triples)
    z_s = pairwise_logits(student, triples)
    result = distill(z_t, z_s, kind=cfg.train.kd, cost_mode=cfg.train.cost, cfg=cfg.sinkhorn, stats=stats)
    kd = LossValue(value=weight * result.loss, grad=kd_parameter_grad(student, triples, weight * result.grad_logits, pool=pool))
    return StudentLoss(kd=kd.value, rec=rec.value, total=kd + rec)


class DistillationTrainer(EpochTrainer):
    """Trains the student against a teacher that it never updates."""

    def __init__(
        self,
        student: Recommender,
        teacher: Recommender | None,
        partitions: Mapping[int, UserPartition] | None,
        split: DataSplit,
        cfg: RunConfig,
        *,
        rng: np.random.Generator,
        pool: ChunkedPool | None = None,
        tag: str = "student",
    ) -> None:
        super().__init__(student, split, cfg, tag=tag, rng=rng, pool=pool)
        self.teacher = teacher
        self.partitions = partitions

    def train_epoch(self) -> EpochLosses:
        distilling = self.teacher is not None and self.cfg.train.kd is not KdKind.NONE
        kd_values: list[float] = []
        rec_values: list[float] = []
        samples = 0
        for batch in self.sampler.pointwise_epoch(self.cfg.train.batch_size, self.rng):
            triples = kd_triples(self.sampler, self.partitions, self.cfg.train.kd_batch_size, self.rng, self.stats) if distilling else None
            loss = student_batch_loss(self.model, self.teacher, batch, triples, self.cfg, stats=self.stats, pool=self.pool)
            self.apply(loss.total)
            kd_values.append(loss.kd)
            rec_values.append(loss.rec)
            samples += len(batch)
        kd = math.fsum(kd_values) / max(1, samples)
        rec = math.fsum(rec_values) / max(1, samples)
        return EpochLosses(total=kd + rec, kd=kd, rec=rec, phase=str(self.cfg.train.kd) if distilling else "rec")


def train_student(
    student: Recommender,
    teacher: Recommender | None,
    partitions: Mapping[int, UserPartition] | None,
    split: DataSplit,
    cfg: RunConfig,
    *,
    rng: np.random.Generator,
    pool: ChunkedPool | None = None,
) -> tuple[Recommender, TrainReport]:
    """Train the student with BCE and (unless disabled) distillation until early stopping."""
    if teacher is None or cfg.train.kd is KdKind.NONE:
        logger.info("Student trains on the recommendation loss only")
    trainer = DistillationTrainer(student, teacher, partitions, split, cfg, rng=rng, pool=pool)
    return student, trainer.fit()
