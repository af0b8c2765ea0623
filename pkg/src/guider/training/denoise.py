"""Denoising training: BPR warm-up, then AMSC partitions and DBPR every epoch."""

import math

import numpy as np
from loguru import logger

from ..amsc import ModalSimilarity, run_amsc
from ..config import RunConfig
from ..data.split import DataSplit
from ..losses import LossValue, dbpr_loss, pairwise_ranking_loss
from ..partition import UserPartition
from ..protocols import Recommender
from ..sampling import DegeneratePartitionError
from ..workers import ChunkedPool
from .loop import EpochLosses, EpochTrainer
from .report import TrainReport

__all__ = ["DenoisingTrainer", "train_teacher"]


class DenoisingTrainer(EpochTrainer):
    """Trains an ID or multi-modal model on its own loss partitions.

    With ``use_dbpr`` false every epoch is plain BPR; with ``use_calibration``
    false the raw loss partition is used without modal calibration.
    """

    def __init__(
        self,
        model: Recommender,
        split: DataSplit,
        similarity: ModalSimilarity,
        cfg: RunConfig,
        *,
        tag: str,
        rng: np.random.Generator,
        pool: ChunkedPool | None = None,
        use_dbpr: bool = True,
        use_calibration: bool = True,
    ) -> None:
        super().__init__(model, split, cfg, tag=tag, rng=rng, pool=pool)
        self.similarity = similarity
        self.use_dbpr = use_dbpr
        self.use_calibration = use_calibration
        self.partitions: dict[int, UserPartition] = {}

    def compute_partitions(self) -> dict[int, UserPartition]:
        """Partition every user under the current parameters and check the set algebra."""
        partitions = run_amsc(self.model, self.split.train, self.similarity, self.cfg.amsc.s_thres, use_calibration=self.use_calibration, pool=self.pool)
        for user, partition in partitions.items():
            partition.check(self.split.train.items_of(user))
        return partitions

    def _bpr_batch(self) -> LossValue:
        batch_size = self.cfg.train.batch_size
        return pairwise_ranking_loss(self.model, self.sampler.uniform(batch_size, self.rng), pool=self.pool)

    def _dbpr_batch(self) -> LossValue:
        batch_size = self.cfg.train.batch_size
        loss = dbpr_loss(self.model, self.partitions, self.sampler, batch_size, self.rng, pool=self.pool)
        anchor_weight = self.cfg.train.dbpr_anchor_weight
        if anchor_weight > 0.0:
            anchor = pairwise_ranking_loss(self.model, self.sampler.clean_uniform(self.partitions, batch_size, self.rng), pool=self.pool)
            loss = loss + anchor.scaled(anchor_weight)
        return loss

    def train_epoch(self) -> EpochLosses:
        denoising = self.use_dbpr and self.epoch > self.cfg.train.warmup_epochs
        phase = "dbpr" if denoising else "bpr"
        if denoising:
            self.partitions = self.compute_partitions()
            skipped = sum(1 for p in self.partitions.values() if not (p.true_set and p.false_set))
            if skipped:
                self.stats.increment("users_skipped", skipped)
                logger.debug(f"[{self.tag}] {skipped} users have no clean/noisy pair this epoch")

        values: list[float] = []
        samples = 0
        for _ in range(self.n_batches):
            if denoising:
                try:
                    loss = self._dbpr_batch()
                except DegeneratePartitionError as e:
                    logger.warning(f"⚠️ [{self.tag}] epoch {self.epoch}: {e}; falling back to BPR")
                    self.stats.increment("bpr_fallbacks")
                    denoising = False
                    phase = "bpr-fallback"
                    loss = self._bpr_batch()
            else:
                loss = self._bpr_batch()
            self.apply(loss)
            values.append(loss.value)
            samples += self.cfg.train.batch_size
        total = math.fsum(values) / samples
        return EpochLosses(total=total, rec=total, phase=phase)

    def finalize(self) -> TrainReport:
        """Restore the best state and partition users under it."""
        report = super().finalize()
        self.partitions = self.compute_partitions()
        return report


def train_teacher(
    teacher: Recommender,
    split: DataSplit,
    similarity: ModalSimilarity,
    cfg: RunConfig,
    *,
    rng: np.random.Generator,
    pool: ChunkedPool | None = None,
    use_dbpr: bool = True,
    use_calibration: bool = True,
    tag: str = "teacher",
) -> tuple[Recommender, dict[int, UserPartition], TrainReport]:
    """Warm up with BPR, then train with AMSC partitions and DBPR until early stopping.

    Returns:
        The model at its best validation epoch, the partitions computed from
        that state, and the training report.

    """
    trainer = DenoisingTrainer(teacher, split, similarity, cfg, tag=tag, rng=rng, pool=pool, use_dbpr=use_dbpr, use_calibration=use_calibration)
    report = trainer.fit()
    return teacher, trainer.partitions, report
