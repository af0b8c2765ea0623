"""Implicit-feedback interaction datasets and delimited-file ingestion."""

import os
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

import numpy as np
import pandas as pd
from loguru import logger

from ..protocols import IntArray

__all__ = ["DatasetError", "Interaction", "InteractionDataset", "load_interactions"]


class DatasetError(Exception):
    """Raised when interaction or feature data is malformed or inconsistent."""

    def __init__(self, message: str, *, line: int | None = None) -> None:
        """Initialize with an optional 1-based source line number."""
        super().__init__(f"{message} (line {line})" if line is not None else message)
        self.line = line


@dataclass(frozen=True, slots=True)
class Interaction:
    """One stored user-item interaction (implicit feedback stores positives only)."""

    user: int
    item: int
    label: int = 1
    injected: bool = False


@dataclass(frozen=True, kw_only=True)
class InteractionDataset:
    """Users, items and their deduplicated positive interactions.

    Build through :meth:`from_pairs`, which derives ``per_user_items`` from the
    interaction list so the two views can never disagree.
    """

    n_users: int
    n_items: int
    interactions: tuple[Interaction, ...]
    per_user_items: Mapping[int, tuple[int, ...]]
    user_tokens: tuple[str, ...] = ()
    item_tokens: tuple[str, ...] = ()
    duplicates_dropped: int = 0
    _pair_set: frozenset[tuple[int, int]] = field(default=frozenset(), repr=False, compare=False)

    @classmethod
    def from_pairs(
        cls,
        n_users: int,
        n_items: int,
        pairs: Iterable[tuple[int, int]],
        *,
        injected: Iterable[tuple[int, int]] = (),
        user_tokens: tuple[str, ...] = (),
        item_tokens: tuple[str, ...] = (),
        duplicates_dropped: int = 0,
    ) -> "InteractionDataset":
        """Build a dataset from ``(user, item)`` pairs in their given order.

        Args:
            n_users: Size of the user index space.
            n_items: Size of the item index space.
            pairs: Positive pairs; duplicates are rejected.
            injected: Pairs to flag as injected noise.
            user_tokens: Raw user tokens by dense index, when known.
            item_tokens: Raw item tokens by dense index, when known.
            duplicates_dropped: Count reported by ingestion.

        Returns:
            The immutable dataset.

        """
        injected_set = frozenset(injected)
        interactions: list[Interaction] = []
        grouped: dict[int, list[int]] = {}
        seen: set[tuple[int, int]] = set()
        for user, item in pairs:
            u, i = int(user), int(item)
            if not 0 <= u < n_users:
                raise DatasetError(f"User index {u} out of range [0, {n_users})")
            if not 0 <= i < n_items:
                raise DatasetError(f"Item index {i} out of range [0, {n_items})")
            if (u, i) in seen:
                raise DatasetError(f"Duplicate interaction ({u}, {i})")
            seen.add((u, i))
            interactions.append(Interaction(user=u, item=i, injected=(u, i) in injected_set))
            grouped.setdefault(u, []).append(i)

        stray = injected_set - seen
        if stray:
            raise DatasetError(f"{len(stray)} injected pairs are not part of the dataset")

        return cls(
            n_users=n_users,
            n_items=n_items,
            interactions=tuple(interactions),
            per_user_items=MappingProxyType({u: tuple(items) for u, items in sorted(grouped.items())}),
            user_tokens=user_tokens,
            item_tokens=item_tokens,
            duplicates_dropped=duplicates_dropped,
            _pair_set=frozenset(seen),
        )

    def __len__(self) -> int:
        return len(self.interactions)

    def __contains__(self, pair: object) -> bool:
        return pair in self._pair_set

    def pairs(self) -> frozenset[tuple[int, int]]:
        """All ``(user, item)`` pairs."""
        return self._pair_set

    def injected_pairs(self) -> frozenset[tuple[int, int]]:
        """Pairs flagged as injected noise."""
        return frozenset((x.user, x.item) for x in self.interactions if x.injected)

    def items_of(self, user: int) -> tuple[int, ...]:
        """Items of ``user`` in stored order (empty when the user has none)."""
        return self.per_user_items.get(user, ())

    def as_arrays(self) -> tuple[IntArray, IntArray]:
        """Parallel ``(users, items)`` index arrays in interaction order."""
        users = np.fromiter((x.user for x in self.interactions), dtype=np.int64, count=len(self.interactions))
        items = np.fromiter((x.item for x in self.interactions), dtype=np.int64, count=len(self.interactions))
        return users, items

    def injected_mask(self) -> np.ndarray:
        """Boolean mask over interactions, True where injected."""
        return np.fromiter((x.injected for x in self.interactions), dtype=bool, count=len(self.interactions))

    def with_interactions(self, pairs: Iterable[tuple[int, int]], *, injected: Iterable[tuple[int, int]] = ()) -> "InteractionDataset":
        """New dataset over the same index spaces and tokens."""
        return InteractionDataset.from_pairs(self.n_users, self.n_items, pairs, injected=injected, user_tokens=self.user_tokens, item_tokens=self.item_tokens)


def load_interactions(path: str | os.PathLike[str], fmt: str | None = None) -> InteractionDataset:
    """Load a ``user,item[,timestamp]`` file and densely re-index its tokens.

    Tokens are indexed ``0..n-1`` in first-appearance order; repeated pairs are
    dropped and counted. A leading ``user,item`` header row is skipped.

    Args:
        path: Interaction file.
        fmt: ``"tsv"`` or ``"csv"``; inferred from the suffix when omitted.

    Returns:
        The loaded dataset.

    """
    source = Path(path)
    if not source.exists():
        raise DatasetError(f"Interaction file not found: {source}")
    if fmt is None:
        fmt = "csv" if source.suffix.lower() == ".csv" else "tsv"
    if fmt not in ("tsv", "csv"):
        raise DatasetError(f"Unsupported interaction format: {fmt!r}")

    try:
        frame = pd.read_csv(
            source,
            sep="\t" if fmt == "tsv" else ",",
            header=None,
            names=["user", "item", "timestamp"],
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            encoding="utf-8",
            engine="python",
        )
    except pd.errors.EmptyDataError as e:
        raise DatasetError(f"Interaction file is empty: {source}") from e
    except pd.errors.ParserError as e:
        raise DatasetError(f"Malformed interaction file {source}: {e}") from e

    # The frame index is the 0-based physical line number.
    frame = frame.fillna("").astype(str)
    frame = frame[(frame["user"].str.strip() != "") | (frame["item"].str.strip() != "") | (frame["timestamp"].str.strip() != "")]
    if len(frame) and (frame.iloc[0]["user"].strip().lower(), frame.iloc[0]["item"].strip().lower()) == ("user", "item"):
        frame = frame.iloc[1:]
    if len(frame) == 0:
        raise DatasetError(f"Interaction file is empty: {source}")

    users_raw = frame["user"].str.strip()
    items_raw = frame["item"].str.strip()
    bad = np.flatnonzero((users_raw == "").to_numpy() | (items_raw == "").to_numpy())
    if bad.size:
        raise DatasetError(f"Malformed row in {source}: expected user and item tokens", line=int(frame.index[bad[0]]) + 1)

    user_codes, user_uniques = pd.factorize(users_raw, sort=False)
    item_codes, item_uniques = pd.factorize(items_raw, sort=False)
    pairs = pd.DataFrame({"user": user_codes, "item": item_codes})
    deduped = pairs.drop_duplicates(keep="first")
    duplicates = len(pairs) - len(deduped)
    if duplicates:
        logger.warning(f"Dropped {duplicates} duplicate interactions from {source}")

    dataset = InteractionDataset.from_pairs(
        len(user_uniques),
        len(item_uniques),
        zip(deduped["user"].tolist(), deduped["item"].tolist(), strict=True),
        user_tokens=tuple(str(t) for t in user_uniques),
        item_tokens=tuple(str(t) for t in item_uniques),
        duplicates_dropped=duplicates,
    )
    logger.info(f"Loaded {len(dataset)} interactions ({dataset.n_users} users, {dataset.n_items} items) from {source}")
    return dataset
