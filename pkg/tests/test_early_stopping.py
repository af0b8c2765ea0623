"""Tests for EarlyStopping."""

import numpy as np
import pytest

from guider.models import TeacherModel
from guider.training import EarlyStopping


class TestEarlyStopping:
    """Test cases for EarlyStopping."""

    def test_stops_after_patience(self) -> None:
        """Test training stops once the score fails to improve for patience epochs."""
        stopper = EarlyStopping(patience=2)
        params = {"w": np.zeros(1)}
        assert not stopper.record(1, 0.1, params)
        assert not stopper.record(2, 0.3, params)
        assert not stopper.record(3, 0.3, params)
        assert stopper.record(4, 0.2, params)
        assert stopper.get_state() == {"best_score": 0.3, "best_epoch": 2, "bad_epochs": 2}

    def test_improvement_resets_counter(self) -> None:
        """Test a new best resets the bad-epoch count."""
        stopper = EarlyStopping(patience=2)
        params = {"w": np.zeros(1)}
        _ = stopper.record(1, 0.1, params)
        _ = stopper.record(2, 0.0, params)
        assert not stopper.record(3, 0.2, params)
        assert stopper.bad_epochs == 0

    def test_restore_best_snapshot(self) -> None:
        """Test restore copies the best parameters back and refreshes the cache."""
        model = TeacherModel(np.ones((1, 1)), np.ones((1, 1)), n_layers=0)
        stopper = EarlyStopping(patience=1)
        _ = stopper.record(1, 0.5, model.params)
        model.params["user_emb"][0, 0] = 7.0
        _ = model.representations()
        _ = stopper.record(2, 0.1, model.params)
        stopper.restore(model)
        assert model.params["user_emb"][0, 0] == 1.0
        assert model.representations()[0][0, 0] == 1.0

    def test_restore_without_snapshot_is_noop(self) -> None:
        """Test restoring before any record leaves the model alone."""
        model = TeacherModel(np.full((1, 1), 2.0), np.ones((1, 1)), n_layers=0)
        EarlyStopping(patience=1).restore(model)
        assert model.params["user_emb"][0, 0] == 2.0

    def test_invalid_patience(self) -> None:
        """Test patience must be positive."""
        with pytest.raises(ValueError, match="patience"):
            _ = EarlyStopping(patience=0)
