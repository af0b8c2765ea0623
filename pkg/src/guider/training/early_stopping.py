"""Patience-based early stopping with best-parameter snapshots."""

from typing import Any

from loguru import logger

from ..protocols import FloatArray, Recommender

__all__ = ["EarlyStopping"]


class EarlyStopping:
    """Tracks the best validation score and stops after ``patience`` epochs without improvement."""

    def __init__(self, patience: int) -> None:
        super().__init__()
        if patience <= 0:
            raise ValueError(f"patience must be positive, got {patience}")
        self.patience = patience
        self.best_score = float("-inf")
        self.best_epoch = 0
        self.bad_epochs = 0
        self._snapshot: dict[str, FloatArray] | None = None

    def record(self, epoch: int, score: float, params: dict[str, FloatArray]) -> bool:
        """Record an epoch's validation score; returns True when training should stop."""
        if score > self.best_score:
            self.best_score = score
            self.best_epoch = epoch
            self.bad_epochs = 0
            self._snapshot = {name: block.copy() for name, block in params.items()}
            return False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            logger.info(f"⏹️ No validation improvement for {self.bad_epochs} epochs; best epoch {self.best_epoch} ({self.best_score:.4f})")
            return True
        return False

    def restore(self, model: Recommender) -> None:
        """Copy the best snapshot back into the model's parameters."""
        if self._snapshot is None:
            return
        for name, block in self._snapshot.items():
            model.params[name][...] = block
        model.invalidate()

    def get_state(self) -> dict[str, Any]:
        """Get current early-stopping state."""
        return {"best_score": self.best_score, "best_epoch": self.best_epoch, "bad_epochs": self.bad_epochs}
