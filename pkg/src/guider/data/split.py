"""Per-user train/valid/test splitting and oracle noise injection."""

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from loguru import logger

from ..artifacts import write_frame_atomic, write_json_atomic
from .interactions import DatasetError, InteractionDataset

__all__ = ["DataSplit", "NoiseReport", "inject_noise", "load_split", "save_split", "split_per_user"]

MAX_NOISE_RATIO = 0.5
# Rejection sampling is used while the free pair space is at least this many times the request.
_REJECTION_HEADROOM = 4


@dataclass(frozen=True, kw_only=True)
class DataSplit:
    """Train/valid/test views sharing one user and item index space."""

    train: InteractionDataset
    valid: InteractionDataset
    test: InteractionDataset
    seed: int

    def __post_init__(self) -> None:
        shapes = {(part.n_users, part.n_items) for part in (self.train, self.valid, self.test)}
        if len(shapes) != 1:
            raise DatasetError(f"Split parts disagree on index spaces: {sorted(shapes)}")

    @property
    def n_users(self) -> int:
        return self.train.n_users

    @property
    def n_items(self) -> int:
        return self.train.n_items

    def all_pairs(self) -> frozenset[tuple[int, int]]:
        """Union of the pairs of all three parts."""
        return self.train.pairs() | self.valid.pairs() | self.test.pairs()

    def exclusions(self, part: str) -> dict[int, frozenset[int]]:
        """Items to hide when ranking for ``part``: train for valid, train and valid for test."""
        hidden = [self.train] if part == "valid" else [self.train, self.valid]
        exclusion: dict[int, set[int]] = {}
        for dataset in hidden:
            for user, items in dataset.per_user_items.items():
                exclusion.setdefault(user, set()).update(items)
        return {user: frozenset(items) for user, items in exclusion.items()}

    def manifest(self) -> dict[str, Any]:
        """Counts, seed and raw tokens, as written to ``split_manifest.json``."""
        return {
            "seed": self.seed,
            "n_users": self.n_users,
            "n_items": self.n_items,
            "train": len(self.train),
            "valid": len(self.valid),
            "test": len(self.test),
            "train_injected": len(self.train.injected_pairs()),
            "user_tokens": list(self.train.user_tokens),
            "item_tokens": list(self.train.item_tokens),
        }


@dataclass(frozen=True, kw_only=True)
class NoiseReport:
    """Pairs added to train by :func:`inject_noise`."""

    ratio: float
    injected_pairs: tuple[tuple[int, int], ...]
    seed: int

    def to_dict(self) -> dict[str, Any]:
        return {"ratio": self.ratio, "seed": self.seed, "n_injected": len(self.injected_pairs), "injected_pairs": [list(p) for p in self.injected_pairs]}


def _held_out_count(n: int, weight: int, total: int) -> int:
    if weight == 0:
        return 0
    return max(1, math.floor(n * weight / total))


def split_per_user(ds: InteractionDataset, ratios: tuple[int, ...] = (8, 1, 1), seed: int = 0) -> DataSplit:
    """Shuffle each user's items and slice them into train/valid/test.

    Users with fewer than three interactions keep everything in train. Other
    users give ``max(1, floor(n * r / sum(ratios)))`` items to each held-out
    part and the rounding remainder to train.

    Args:
        ds: Dataset to split.
        ratios: Train/valid/test weights.
        seed: Shuffle seed.

    Returns:
        The split.

    """
    if len(ratios) != 3 or sum(ratios) <= 0 or any(r < 0 for r in ratios):
        raise DatasetError(f"ratios must be three non-negative weights, got {ratios}")
    total = sum(ratios)
    rng = np.random.default_rng(seed)
    train: list[tuple[int, int]] = []
    valid: list[tuple[int, int]] = []
    test: list[tuple[int, int]] = []

    for user, items in ds.per_user_items.items():
        n = len(items)
        if n < 3:
            train.extend((user, i) for i in items)
            continue
        order = rng.permutation(n)
        shuffled = [items[k] for k in order]
        n_valid = _held_out_count(n, ratios[1], total)
        n_test = _held_out_count(n, ratios[2], total)
        n_train = n - n_valid - n_test
        train.extend((user, i) for i in shuffled[:n_train])
        valid.extend((user, i) for i in shuffled[n_train : n_train + n_valid])
        test.extend((user, i) for i in shuffled[n_train + n_valid :])

    injected = ds.injected_pairs()
    split = DataSplit(
        train=ds.with_interactions(train, injected=injected & frozenset(train)),
        valid=ds.with_interactions(valid),
        test=ds.with_interactions(test),
        seed=seed,
    )
    logger.info(f"Split {len(ds)} interactions into train={len(split.train)} valid={len(split.valid)} test={len(split.test)} (seed={seed})")
    return split


def inject_noise(split: DataSplit, ratio: float, seed: int) -> tuple[DataSplit, NoiseReport]:
    """Add uniformly sampled unobserved pairs to train, flagged as injected.

    Args:
        split: Clean split.
        ratio: Fraction of the current train size to inject, in ``[0, 0.5]``.
        seed: Sampling seed.

    Returns:
        The noisy split and the report of injected pairs.

    """
    if not 0.0 <= ratio <= MAX_NOISE_RATIO:
        raise DatasetError(f"Noise ratio must lie in [0, {MAX_NOISE_RATIO}], got {ratio}")
    n_inject = math.floor(ratio * len(split.train) + 0.5)
    if n_inject == 0:
        return split, NoiseReport(ratio=ratio, injected_pairs=(), seed=seed)

    occupied = split.all_pairs()
    n_free = split.n_users * split.n_items - len(occupied)
    if n_inject > n_free:
        raise DatasetError(f"Cannot inject {n_inject} pairs: only {n_free} unobserved (user, item) pairs remain")

    rng = np.random.default_rng(seed)
    chosen: list[tuple[int, int]] = []
    if n_free >= _REJECTION_HEADROOM * n_inject:
        taken: set[tuple[int, int]] = set()
        while len(chosen) < n_inject:
            users = rng.integers(0, split.n_users, size=n_inject)
            items = rng.integers(0, split.n_items, size=n_inject)
            for u, i in zip(users.tolist(), items.tolist(), strict=True):
                pair = (u, i)
                if pair in occupied or pair in taken:
                    continue
                taken.add(pair)
                chosen.append(pair)
                if len(chosen) == n_inject:
                    break
    else:
        free = [(u, i) for u in range(split.n_users) for i in range(split.n_items) if (u, i) not in occupied]
        picks = rng.choice(len(free), size=n_inject, replace=False)
        chosen = [free[k] for k in picks.tolist()]

    train_pairs = [(x.user, x.item) for x in split.train.interactions] + chosen
    already = split.train.injected_pairs()
    noisy_train = split.train.with_interactions(train_pairs, injected=already | frozenset(chosen))
    report = NoiseReport(ratio=ratio, injected_pairs=tuple(chosen), seed=seed)
    logger.info(f"Injected {n_inject} noisy interactions (ratio={ratio}, seed={seed})")
    return DataSplit(train=noisy_train, valid=split.valid, test=split.test, seed=split.seed), report


def _frame(dataset: InteractionDataset) -> pd.DataFrame:
    users, items = dataset.as_arrays()
    return pd.DataFrame({"user": users, "item": items})


def save_split(split: DataSplit, directory: str | os.PathLike[str], noise: NoiseReport | None = None) -> Path:
    """Write ``train.tsv``, ``valid.tsv``, ``test.tsv``, ``injected.tsv`` and the manifest.

    Indices are written densely; the manifest records the index spaces so
    :func:`load_split` restores the exact same dataset shapes.
    """
    target = Path(directory)
    for name, dataset in (("train", split.train), ("valid", split.valid), ("test", split.test)):
        _ = write_frame_atomic(target / f"{name}.tsv", _frame(dataset), sep="\t", header=False)
    injected = sorted(split.train.injected_pairs())
    _ = write_frame_atomic(target / "injected.tsv", pd.DataFrame(injected, columns=pd.Index(["user", "item"])), sep="\t", header=False)
    _ = write_json_atomic(target / "split_manifest.json", split.manifest())
    if noise is not None:
        _ = write_json_atomic(target / "noise_report.json", noise.to_dict())
    return target


def _read_pairs(path: Path) -> list[tuple[int, int]]:
    if not path.exists() or path.stat().st_size == 0:
        return []
    frame = pd.read_csv(path, sep="\t", header=None, names=["user", "item"], dtype=np.int64)
    return list(zip(frame["user"].tolist(), frame["item"].tolist(), strict=True))


def load_split(directory: str | os.PathLike[str]) -> DataSplit:
    """Read a split directory written by :func:`save_split`."""
    source = Path(directory)
    manifest_path = source / "split_manifest.json"
    if not manifest_path.exists():
        raise DatasetError(f"Split manifest not found: {manifest_path}")
    with open(manifest_path, encoding="utf-8") as f:
        manifest = json.load(f)

    n_users, n_items = int(manifest["n_users"]), int(manifest["n_items"])
    tokens: dict[str, Any] = {
        "user_tokens": tuple(str(t) for t in manifest.get("user_tokens", [])),
        "item_tokens": tuple(str(t) for t in manifest.get("item_tokens", [])),
    }
    injected = frozenset(_read_pairs(source / "injected.tsv"))
    train = InteractionDataset.from_pairs(n_users, n_items, _read_pairs(source / "train.tsv"), injected=injected, **tokens)
    valid = InteractionDataset.from_pairs(n_users, n_items, _read_pairs(source / "valid.tsv"), **tokens)
    test = InteractionDataset.from_pairs(n_users, n_items, _read_pairs(source / "test.tsv"), **tokens)
    logger.info(f"Loaded split from {source}: train={len(train)} valid={len(valid)} test={len(test)}")
    return DataSplit(train=train, valid=valid, test=test, seed=int(manifest["seed"]))
