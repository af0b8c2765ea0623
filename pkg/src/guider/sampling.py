"""Training triple and pointwise sample generation."""

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from .data.interactions import InteractionDataset
from .partition import UserPartition
from .protocols import IntArray

__all__ = ["DegeneratePartitionError", "PointwiseBatch", "TripleSampler", "Triples"]


class DegeneratePartitionError(Exception):
    """Raised when no user has both a clean and a noisy item to pair."""


@dataclass(frozen=True, kw_only=True)
class Triples:
    """Parallel ``(user, preferred item, other item)`` index arrays."""

    users: IntArray
    pos: IntArray
    neg: IntArray

    def __len__(self) -> int:
        return int(self.users.size)

    def as_list(self) -> list[tuple[int, int, int]]:
        return list(zip(self.users.tolist(), self.pos.tolist(), self.neg.tolist(), strict=True))


@dataclass(frozen=True, kw_only=True)
class PointwiseBatch:
    """Positives with one sampled negative each, as labeled ``(user, item)`` rows."""

    users: IntArray
    items: IntArray
    labels: IntArray

    def __len__(self) -> int:
        return int(self.users.size)


class TripleSampler:
    """Uniform samplers over a train set (users, then items of each user)."""

    def __init__(self, train: InteractionDataset) -> None:
        """Index the train positives."""
        super().__init__()
        self.n_items = train.n_items
        self._items_of = {u: np.asarray(items, dtype=np.int64) for u, items in train.per_user_items.items() if items}
        self._positive_sets = {u: frozenset(items) for u, items in train.per_user_items.items()}
        # Users who have not interacted with every item can receive a negative.
        self._users = np.array(sorted(u for u, items in self._items_of.items() if items.size < self.n_items), dtype=np.int64)
        self._train_users, self._train_items = train.as_arrays()

    @property
    def n_train(self) -> int:
        return int(self._train_users.size)

    def negatives(self, users: IntArray, rng: np.random.Generator) -> IntArray:
        """One uniformly drawn unobserved item per user.

        Raises:
            ValueError: A user has interacted with every item.

        """
        negatives = rng.integers(0, self.n_items, size=users.size)
        for k, (user, item) in enumerate(zip(users.tolist(), negatives.tolist(), strict=True)):
            positives = self._positive_sets.get(user, frozenset())
            if len(positives) >= self.n_items:
                raise ValueError(f"User {user} has no unobserved item to sample")
            while item in positives:
                item = int(rng.integers(0, self.n_items))
            negatives[k] = item
        return negatives.astype(np.int64)

    def uniform(self, n: int, rng: np.random.Generator) -> Triples:
        """BPR triples: uniform user, uniform positive, uniform unobserved negative."""
        if self._users.size == 0:
            raise DegeneratePartitionError("No user has both observed and unobserved items")
        users = rng.choice(self._users, size=n)
        pos = np.fromiter((self._items_of[u][rng.integers(0, self._items_of[u].size)] for u in users.tolist()), dtype=np.int64, count=n)
        return Triples(users=users, pos=pos, neg=self.negatives(users, rng))

    def from_partitions(self, partitions: Mapping[int, UserPartition], n: int, rng: np.random.Generator) -> Triples:
        """DBPR triples: ``i`` from the user's true set, ``j`` from its false set."""
        eligible = [u for u in sorted(partitions) if partitions[u].true_set and partitions[u].false_set]
        if not eligible:
            raise DegeneratePartitionError("No user has both a true and a false item")
        users = rng.choice(np.asarray(eligible, dtype=np.int64), size=n)
        pos = np.empty(n, dtype=np.int64)
        neg = np.empty(n, dtype=np.int64)
        for k, user in enumerate(users.tolist()):
            part = partitions[user]
            pos[k] = part.true_set[int(rng.integers(0, len(part.true_set)))]
            neg[k] = part.false_set[int(rng.integers(0, len(part.false_set)))]
        return Triples(users=users, pos=pos, neg=neg)

    def clean_uniform(self, partitions: Mapping[int, UserPartition], n: int, rng: np.random.Generator) -> Triples:
        """Triples pairing a true-set item with a uniformly drawn unobserved item."""
        eligible = [u for u in sorted(partitions) if partitions[u].true_set and u in self._positive_sets and len(self._positive_sets[u]) < self.n_items]
        if not eligible:
            raise DegeneratePartitionError("No user has a true item and an unobserved item")
        users = rng.choice(np.asarray(eligible, dtype=np.int64), size=n)
        pos = np.fromiter((partitions[u].true_set[int(rng.integers(0, len(partitions[u].true_set)))] for u in users.tolist()), dtype=np.int64, count=n)
        return Triples(users=users, pos=pos, neg=self.negatives(users, rng))

    def pointwise_epoch(self, batch_size: int, rng: np.random.Generator) -> list[PointwiseBatch]:
        """Shuffled train positives in batches, each positive followed by one sampled negative.

        Positives of users who interacted with every item get no negative.
        """
        order = rng.permutation(self.n_train)
        batches: list[PointwiseBatch] = []
        for start in range(0, order.size, batch_size):
            idx = order[start : start + batch_size]
            users = self._train_users[idx]
            sampled = users[np.isin(users, self._users)]
            negatives = self.negatives(sampled, rng)
            batches.append(
                PointwiseBatch(
                    users=np.concatenate([users, sampled]),
                    items=np.concatenate([self._train_items[idx], negatives]),
                    labels=np.concatenate([np.ones(idx.size, dtype=np.int64), np.zeros(sampled.size, dtype=np.int64)]),
                )
            )
        return batches
