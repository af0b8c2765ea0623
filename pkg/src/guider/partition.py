"""Per-user interaction partitions produced by modality similarity calibration."""

from collections.abc import Iterable
from dataclasses import dataclass
from typing import Any

__all__ = ["PartitionInvariantError", "UserPartition"]


class PartitionInvariantError(ValueError):
    """Raised when a partition's sets are not a consistent split of the user's items."""


@dataclass(frozen=True, kw_only=True)
class UserPartition:
    """Reliable/spurious split of one user's train items and its calibrated clean/noisy split."""

    user: int
    reliable: tuple[int, ...]
    spurious: tuple[int, ...]
    true_set: tuple[int, ...]
    false_set: tuple[int, ...]

    def check(self, train_items: Iterable[int] | None = None) -> None:
        """Verify the set algebra; ``train_items`` additionally checks exhaustiveness."""
        rel, spr = set(self.reliable), set(self.spurious)
        true, false = set(self.true_set), set(self.false_set)
        everything = rel | spr
        problems = [
            (rel & spr, "reliable and spurious overlap"),
            (true & false, "true and false sets overlap"),
            (rel - true, "reliable items missing from the true set"),
            (false - spr, "false items outside the spurious set"),
            ((true | false) ^ everything, "true and false do not cover reliable and spurious"),
        ]
        if train_items is not None:
            problems.append((everything ^ set(train_items), "partition does not cover the user's train items"))
        for offending, message in problems:
            if offending:
                raise PartitionInvariantError(f"User {self.user}: {message} ({sorted(offending)[:5]})")

    def to_dict(self) -> dict[str, Any]:
        """JSON-lines dump row."""
        return {"user": self.user, "reliable": list(self.reliable), "spurious": list(self.spurious), "true": list(self.true_set), "false": list(self.false_set)}
