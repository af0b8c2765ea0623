"""Tests for the teacher and student trainers."""

import dataclasses

import numpy as np
import pytest

from guider.config import KdKind, RunConfig
from guider.losses import pairwise_ranking_loss
from guider.models import ModelKind, ModelShape, init_model
from guider.partition import UserPartition
from guider.sampling import TripleSampler
from guider.stats_tracker import TrainingStats
from guider.training import DenoisingTrainer, DistillationTrainer, kd_triples, student_batch_loss, train_student, train_teacher
from tests.base_test import BaseTestCase, assert_partition_invariants, parameter_gradient_error


def with_train(config: RunConfig, **changes: object) -> RunConfig:
    return dataclasses.replace(config, train=dataclasses.replace(config.train, **changes))


class TestDenoisingTrainer(BaseTestCase):
    """Test cases for DenoisingTrainer."""

    def test_warmup_then_dbpr(self, teacher, noisy_split, similarity, config: RunConfig) -> None:
        """Test epochs after the warm-up train on partitions."""
        trainer = DenoisingTrainer(teacher, noisy_split, similarity, config, tag="teacher", rng=self.rng)
        report = trainer.fit()
        phases = [record.phase for record in report.epochs]
        assert phases[0] == "bpr"
        assert set(phases[1:]) <= {"dbpr", "bpr-fallback"}
        assert 1 <= report.best_epoch <= len(report.epochs)
        assert_partition_invariants(trainer.partitions, noisy_split.train)

    def test_bpr_only_without_dbpr(self, teacher, noisy_split, similarity, config: RunConfig) -> None:
        """Test disabling DBPR keeps every epoch on BPR."""
        trainer = DenoisingTrainer(teacher, noisy_split, similarity, config, tag="teacher", rng=self.rng, use_dbpr=False)
        report = trainer.fit()
        assert {record.phase for record in report.epochs} == {"bpr"}

    def test_degenerate_partitions_fall_back(self, teacher, noisy_split, similarity, config: RunConfig) -> None:
        """Test an epoch without clean/noisy pairs falls back to BPR and counts it."""
        trainer = DenoisingTrainer(teacher, noisy_split, similarity, with_train(config, warmup_epochs=0, max_epochs=1), tag="teacher", rng=self.rng)
        clean = {u: UserPartition(user=u, reliable=items, spurious=(), true_set=items, false_set=()) for u, items in noisy_split.train.per_user_items.items()}
        trainer.compute_partitions = lambda: clean  # type: ignore[method-assign]
        report = trainer.fit()
        assert report.epochs[0].phase == "bpr-fallback"
        assert trainer.stats.get_stats()["bpr_fallbacks"] == 1
        assert trainer.stats.get_stats()["users_skipped"] == len(clean)

    def test_training_improves_fit(self, teacher, noisy_split, similarity, config: RunConfig) -> None:
        """Test a few epochs lower the BPR loss on train."""
        cfg = with_train(config, lr=1e-2, max_epochs=5, patience=5, warmup_epochs=5)
        sampler = TripleSampler(noisy_split.train)
        fixed_triples = sampler.uniform(500, np.random.default_rng(0))
        before = pairwise_ranking_loss(teacher, fixed_triples).value
        _ = DenoisingTrainer(teacher, noisy_split, similarity, cfg, tag="teacher", rng=self.rng).fit()
        teacher.invalidate()
        assert pairwise_ranking_loss(teacher, fixed_triples).value < before

    def test_train_teacher_returns_partitions(self, teacher, noisy_split, similarity, config: RunConfig) -> None:
        """Test the functional entry point returns model, partitions and report."""
        model, partitions, report = train_teacher(teacher, noisy_split, similarity, config, rng=self.rng)
        assert model is teacher
        assert set(partitions) == set(noisy_split.train.per_user_items)
        assert report.model == "teacher"

    def test_deterministic(self, noisy_split, similarity, config: RunConfig) -> None:
        """Test equal seeds give identical parameters."""
        results = []
        for _ in range(2):
            model = init_model(ModelKind.TEACHER, ModelShape(n_users=noisy_split.n_users, n_items=noisy_split.n_items, d=8, n_layers=1), seed=2, train=noisy_split.train)
            _ = DenoisingTrainer(model, noisy_split, similarity, config, tag="teacher", rng=np.random.default_rng(9)).fit()
            results.append(model.params["user_emb"].copy())
        np.testing.assert_array_equal(results[0], results[1])


class TestStudentLoss(BaseTestCase):
    """Test cases for student_batch_loss and kd_triples."""

    @pytest.mark.parametrize("kd", [KdKind.OT, KdKind.KL])
    def test_total_is_sum_and_teacher_frozen(self, teacher, student, noisy_split, config: RunConfig, kd: KdKind) -> None:
        """Test the objective adds KD and BCE and never touches the teacher."""
        cfg = with_train(config, kd=kd, kd_weight=0.5)
        sampler = TripleSampler(noisy_split.train)
        batch = sampler.pointwise_epoch(32, self.rng)[0]
        triples = sampler.uniform(16, self.rng)
        before = {name: block.copy() for name, block in teacher.params.items()}
        loss = student_batch_loss(student, teacher, batch, triples, cfg)
        assert loss.total.value == pytest.approx(loss.kd + loss.rec)
        assert loss.kd >= 0.0
        assert set(loss.total.grad) == set(student.params)
        for name, block in teacher.params.items():
            np.testing.assert_array_equal(block, before[name])

    def test_no_teacher_is_plain_bce(self, student, noisy_split, config: RunConfig) -> None:
        """Test the student objective without a teacher is its BCE loss."""
        batch = TripleSampler(noisy_split.train).pointwise_epoch(32, self.rng)[0]
        loss = student_batch_loss(student, None, batch, None, config)
        assert loss.kd == 0.0
        assert loss.total.value == loss.rec

    def test_kl_objective_gradient(self, teacher, student, noisy_split, config: RunConfig) -> None:
        """Test the combined KL + BCE gradient against finite differences."""
        cfg = with_train(config, kd=KdKind.KL)
        sampler = TripleSampler(noisy_split.train)
        batch = sampler.pointwise_epoch(16, self.rng)[0]
        triples = sampler.uniform(8, self.rng)
        error = parameter_gradient_error(student, lambda: student_batch_loss(student, teacher, batch, triples, cfg).total, self.rng)
        assert error <= 1e-5

    def test_kd_triples_fall_back_to_uniform(self, noisy_split) -> None:
        """Test partitions without false items fall back to uniform triples."""
        stats = TrainingStats()
        clean = {u: UserPartition(user=u, reliable=items, spurious=(), true_set=items, false_set=()) for u, items in noisy_split.train.per_user_items.items()}
        triples = kd_triples(TripleSampler(noisy_split.train), clean, 10, self.rng, stats)
        assert len(triples) == 10
        assert stats.get_stats()["bpr_fallbacks"] == 1


class TestDistillationTrainer(BaseTestCase):
    """Test cases for DistillationTrainer."""

    @pytest.mark.parametrize("kd", [KdKind.OT, KdKind.KL, KdKind.NONE])
    def test_fit_reports_phases(self, teacher, student, noisy_split, config: RunConfig, kd: KdKind) -> None:
        """Test each KD kind trains and labels its epochs."""
        cfg = with_train(config, kd=kd, max_epochs=2)
        trainer = DistillationTrainer(student, teacher, None, noisy_split, cfg, rng=self.rng)
        report = trainer.fit()
        expected = "rec" if kd is KdKind.NONE else str(kd)
        assert {record.phase for record in report.epochs} == {expected}
        if kd is KdKind.NONE:
            assert all(record.kd_loss == 0.0 for record in report.epochs)

    def test_train_student_without_teacher(self, student, noisy_split, config: RunConfig) -> None:
        """Test the functional entry point trains on BCE alone when no teacher is given."""
        model, report = train_student(student, None, None, noisy_split, with_train(config, max_epochs=1), rng=self.rng)
        assert model is student
        assert report.epochs[0].phase == "rec"
