"""Tests for noise diagnostics."""

from pathlib import Path

import pandas as pd
import pytest

from guider.data import DatasetError
from guider.evaluation import noise_detection_report, score_distribution_report, threshold_sweep
from guider.partition import UserPartition


class TestScoreDistribution:
    """Test cases for score_distribution_report."""

    def test_histogram_and_auc(self, teacher, noisy_split, tmp_path: Path) -> None:
        """Test histograms integrate to one and the AUC is a probability."""
        report = score_distribution_report(teacher, noisy_split.train, sample_frac=0.5, seed=1)
        width = report.histogram["bin_hi"] - report.histogram["bin_lo"]
        assert float((report.histogram["clean_density"] * width).sum()) == pytest.approx(1.0)
        assert float((report.histogram["noisy_density"] * width).sum()) == pytest.approx(1.0)
        assert 0.0 <= report.auc <= 1.0
        assert report.n_noisy == len(noisy_split.train.injected_pairs())
        assert report.n_clean == round(0.5 * (len(noisy_split.train) - report.n_noisy))
        frame = pd.read_csv(report.write_csv(tmp_path / "teacher_scores.csv"))
        assert list(frame.columns) == ["bin_lo", "bin_hi", "clean_density", "noisy_density"]
        assert report.summary()["bins"] == len(frame)

    def test_seeded_sample(self, teacher, noisy_split) -> None:
        """Test the clean sample is reproducible."""
        a = score_distribution_report(teacher, noisy_split.train, sample_frac=0.2, seed=4)
        b = score_distribution_report(teacher, noisy_split.train, sample_frac=0.2, seed=4)
        assert a.auc == b.auc

    def test_requires_injected_noise(self, teacher, split) -> None:
        """Test clean train sets cannot be diagnosed."""
        with pytest.raises(DatasetError, match="inject-noise"):
            _ = score_distribution_report(teacher, split.train)

    @pytest.mark.parametrize("frac", [0.0, 1.5])
    def test_sample_fraction_range(self, teacher, noisy_split, frac: float) -> None:
        """Test the sample fraction must lie in (0, 1]."""
        with pytest.raises(ValueError, match="sample_frac"):
            _ = score_distribution_report(teacher, noisy_split.train, sample_frac=frac)


class TestNoiseDetection:
    """Test cases for noise_detection_report and threshold_sweep."""

    def test_precision_recall_lift(self) -> None:
        """Test the pooled false sets are scored against the injected pairs."""
        partitions = {
            0: UserPartition(user=0, reliable=(0,), spurious=(1, 2), true_set=(0,), false_set=(1, 2)),
            1: UserPartition(user=1, reliable=(3,), spurious=(4,), true_set=(3, 4), false_set=()),
        }
        report = noise_detection_report(partitions, [(0, 1), (1, 4)], n_train=5)
        assert report.precision == 0.5
        assert report.recall == 0.5
        assert report.lift == pytest.approx(0.5 / (2 / 5))
        assert not report.empty

    def test_empty_when_nothing_flagged(self) -> None:
        """Test no flagged pairs gives an explicit empty report."""
        partitions = {0: UserPartition(user=0, reliable=(0,), spurious=(), true_set=(0,), false_set=())}
        report = noise_detection_report(partitions, [(0, 0)], n_train=1)
        assert report.empty
        assert report.to_dict()["precision"] == 0.0

    def test_threshold_sweep_rows(self, teacher, noisy_split, similarity) -> None:
        """Test one row per threshold and fewer flags at lower thresholds."""
        rows = threshold_sweep(teacher, noisy_split.train, similarity, [0.0, 0.5, 1.1])
        assert [row["s_thres"] for row in rows] == [0.0, 0.5, 1.1]
        assert rows[0]["n_flagged"] <= rows[1]["n_flagged"] <= rows[2]["n_flagged"]
        assert all(row["n_injected"] == len(noisy_split.train.injected_pairs()) for row in rows)
