"""Warning counters surfaced in training reports."""

from typing import Any

_COUNTERS = ("sinkhorn_nonconverged", "log_domain_switches", "users_skipped", "bpr_fallbacks")


class TrainingStats:
    """Manages training warning counters."""

    def __init__(self) -> None:
        """Initialize stats tracker."""
        super().__init__()
        self.stats = dict.fromkeys(_COUNTERS, 0)

    def increment(self, key: str, amount: int = 1) -> None:
        """Increment a named counter."""
        if key not in self.stats:
            raise KeyError(f"Unknown training counter: {key}")
        self.stats[key] += amount

    def get_stats(self) -> dict[str, Any]:
        """Get current statistics."""
        return self.stats.copy()

    def reset(self) -> None:
        """Reset all statistics to zero."""
        self.stats = dict.fromkeys(_COUNTERS, 0)
