"""Paired end-to-end runs on the full-size planted-cluster corpus."""

import dataclasses

import numpy as np
import pytest

from guider.config import Mode, RunConfig, SinkhornConfig, SynthConfig, TrainConfig
from guider.data import generate_synthetic, split_per_user
from guider.evaluation.metrics import MetricsRow
from guider.training.pipeline import PreparedData, run_guider

SEEDS = (0, 1, 2)
NOISE_RATIOS = (0.05, 0.10, 0.15, 0.20)
CORPUS = SynthConfig(n_users=500, n_items=200, n_clusters=10)


def prepared(seed: int) -> PreparedData:
    corpus = generate_synthetic(CORPUS, seed=seed)
    return PreparedData(split=split_per_user(corpus.dataset, (8, 1, 1), seed=seed), text=corpus.text, vision=corpus.vision)


def run_config(config: RunConfig, seed: int, mode: Mode) -> RunConfig:
    return dataclasses.replace(
        config,
        seed=seed,
        model=dataclasses.replace(config.model, d=16),
        sinkhorn=SinkhornConfig(lam=0.1, max_iter=200, tol=1e-8),
        train=TrainConfig(mode=mode, lr=5e-3, batch_size=256, kd_batch_size=128, warmup_epochs=5, patience=5, max_epochs=25, threads=1),
    )


def recall20(metrics: list[MetricsRow], model: str) -> float:
    return next(row.recall for row in metrics if row.model == model and row.k == 20)


@pytest.mark.slow
class TestNoiseDetection:
    """Test cases for noise identification by the trained teacher's partitions."""

    def test_lift_over_chance(self, config: RunConfig, tmp_path) -> None:
        """Test pooled false sets find injected interactions at least twice as often as chance."""
        lifts = []
        for seed in SEEDS:
            result = run_guider(run_config(config, seed, Mode.TEACHER_ONLY), tmp_path / f"seed{seed}", data=prepared(seed), noise_ratio=0.1)
            assert result.noise_detection is not None
            assert not result.noise_detection.empty
            lifts.append(result.noise_detection.lift)
        assert float(np.mean(lifts)) >= 2.0, lifts


@pytest.mark.slow
class TestDenoisingBenefit:
    """Test cases comparing the distilled student with a student trained alone."""

    def test_guider_student_not_worse_than_plain(self, config: RunConfig, tmp_path) -> None:
        """Test the distilled student matches or beats the plain student at every noise ratio."""
        gains: dict[float, list[float]] = {ratio: [] for ratio in NOISE_RATIOS}
        for seed in SEEDS:
            data = prepared(seed)
            for ratio in NOISE_RATIOS:
                guided = run_guider(run_config(config, seed, Mode.GUIDER), tmp_path / f"guider_{seed}_{ratio:g}", data=data, noise_ratio=ratio)
                plain = run_guider(run_config(config, seed, Mode.PLAIN), tmp_path / f"plain_{seed}_{ratio:g}", data=data, noise_ratio=ratio)
                gains[ratio].append(recall20(guided.metrics, "student") - recall20(plain.metrics, "student"))
        for ratio, per_seed in gains.items():
            assert float(np.mean(per_seed)) >= 0.0, (ratio, per_seed)
        assert float(np.mean([g for per_seed in gains.values() for g in per_seed])) > 0.0, gains
