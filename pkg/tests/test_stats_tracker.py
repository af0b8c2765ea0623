"""Tests for TrainingStats."""

import pytest

from guider.stats_tracker import TrainingStats


class TestTrainingStats:
    """Test cases for TrainingStats."""

    def test_initial_counters_zero(self) -> None:
        """Test all counters start at zero."""
        stats = TrainingStats()
        assert stats.get_stats() == {"sinkhorn_nonconverged": 0, "log_domain_switches": 0, "users_skipped": 0, "bpr_fallbacks": 0}

    def test_increment(self) -> None:
        """Test increments accumulate in the snapshot."""
        stats = TrainingStats()
        stats.increment("users_skipped")
        stats.increment("users_skipped", 4)
        assert stats.get_stats()["users_skipped"] == 5
        assert stats.get_stats()["bpr_fallbacks"] == 0

    def test_unknown_counter_rejected(self) -> None:
        """Test misspelled counters fail loudly."""
        with pytest.raises(KeyError):
            TrainingStats().increment("sinkhorn_failures")

    def test_get_stats_is_a_copy(self) -> None:
        """Test callers cannot mutate the tracker through a snapshot."""
        stats = TrainingStats()
        snapshot = stats.get_stats()
        snapshot["bpr_fallbacks"] = 99
        assert stats.get_stats()["bpr_fallbacks"] == 0

    def test_reset(self) -> None:
        """Test reset zeroes every counter."""
        stats = TrainingStats()
        stats.increment("log_domain_switches", 3)
        stats.reset()
        assert all(v == 0 for v in stats.get_stats().values())
