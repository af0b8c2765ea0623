"""Tests for UserPartition."""

import pytest

from guider.partition import PartitionInvariantError, UserPartition


class TestUserPartition:
    """Test cases for UserPartition."""

    def _partition(self, **overrides: tuple[int, ...]) -> UserPartition:
        values = {"reliable": (1, 2), "spurious": (3, 4), "true_set": (1, 2, 3), "false_set": (4,)}
        values.update(overrides)
        return UserPartition(user=0, **values)

    def test_valid_partition_passes(self) -> None:
        """Test a consistent partition passes with and without train items."""
        part = self._partition()
        part.check()
        part.check([1, 2, 3, 4])

    @pytest.mark.parametrize(
        ("overrides", "message"),
        [
            ({"spurious": (2, 3, 4)}, "overlap"),
            ({"true_set": (2, 3)}, "reliable items missing"),
            ({"false_set": (1, 4), "true_set": (2, 3)}, "reliable items missing"),
            ({"true_set": (1, 2, 3, 9)}, "do not cover"),
            ({"true_set": (1, 2, 3, 4)}, "true and false sets overlap"),
        ],
    )
    def test_invariant_violations(self, overrides: dict[str, tuple[int, ...]], message: str) -> None:
        """Test each broken invariant is reported."""
        with pytest.raises(PartitionInvariantError, match=message):
            self._partition(**overrides).check()

    def test_train_coverage(self) -> None:
        """Test a partition missing a train item is rejected."""
        with pytest.raises(PartitionInvariantError, match="train items"):
            self._partition().check([1, 2, 3, 4, 5])

    def test_to_dict(self) -> None:
        """Test the dump row uses the short set names."""
        assert self._partition().to_dict() == {"user": 0, "reliable": [1, 2], "spurious": [3, 4], "true": [1, 2, 3], "false": [4]}
