"""Full-catalog top-K ranking metrics."""

import math
import os
from collections.abc import Collection, Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from loguru import logger

from ..artifacts import write_jsonl_atomic
from ..data.split import DataSplit
from ..protocols import FloatArray, IntArray, Recommender
from ..workers import ChunkedPool

__all__ = ["MetricsRow", "evaluate", "ndcg_at_k", "per_user_metrics", "rank_items", "rank_scores", "recall_at_k", "write_metrics_jsonl"]

EVAL_CHUNK = 256


@dataclass(frozen=True, kw_only=True)
class MetricsRow:
    """Mean Recall@K and NDCG@K of one model over users with held-out items."""

    model: str
    k: int
    recall: float
    ndcg: float
    n_users: int

    def to_dict(self) -> dict[str, Any]:
        return {"model": self.model, "K": self.k, "recall": self.recall, "ndcg": self.ndcg, "n_users": self.n_users}


def rank_scores(scores: FloatArray, exclusion: Collection[int] = ()) -> IntArray:
    """Item indices by descending score, ties by ascending index, excluded items removed."""
    order = np.lexsort((np.arange(scores.size), -scores))
    if not exclusion:
        return order.astype(np.int64)
    mask = np.ones(scores.size, dtype=bool)
    mask[np.fromiter(exclusion, dtype=np.int64)] = False
    return order[mask[order]].astype(np.int64)


def rank_items(model: Recommender, u: int, exclusion: Collection[int] = ()) -> list[int]:
    """Every non-excluded item ranked for user ``u``."""
    if not 0 <= u < model.n_users:
        raise IndexError(f"User index {u} out of range [0, {model.n_users})")
    users, items = model.representations()
    return rank_scores(items @ users[u], exclusion).tolist()


def recall_at_k(ranking: Sequence[int], test_items: Collection[int], k: int) -> float:
    """Fraction of the test items found in the top ``k``."""
    if k < 1:
        raise ValueError(f"K must be at least 1, got {k}")
    if not test_items:
        raise ValueError("Recall is undefined for an empty test set")
    targets = set(test_items)
    return sum(1 for item in ranking[:k] if item in targets) / len(targets)


def ndcg_at_k(ranking: Sequence[int], test_items: Collection[int], k: int) -> float:
    """Binary-relevance NDCG with the ``1 / log2(p + 1)`` discount."""
    if k < 1:
        raise ValueError(f"K must be at least 1, got {k}")
    if not test_items:
        raise ValueError("NDCG is undefined for an empty test set")
    targets = set(test_items)
    dcg = math.fsum(1.0 / math.log2(p + 2) for p, item in enumerate(ranking[:k]) if item in targets)
    idcg = math.fsum(1.0 / math.log2(p + 2) for p in range(min(k, len(targets))))
    return dcg / idcg


def per_user_metrics(model: Recommender, split: DataSplit, ks: Iterable[int] = (5, 20), *, part: str = "test", pool: ChunkedPool | None = None) -> dict[int, dict[int, tuple[float, float]]]:
    """``{user: {K: (recall, ndcg)}}`` for every user with held-out items in ``part``."""
    cutoffs = sorted(set(ks))
    held_out = split.valid if part == "valid" else split.test
    excluded = split.exclusions(part)
    users = sorted(u for u, items in held_out.per_user_items.items() if items)
    user_repr, item_repr = model.representations()
    depth = min(max(cutoffs), model.n_items)

    def _chunk(start: int, stop: int) -> list[tuple[int, dict[int, tuple[float, float]]]]:
        batch = users[start:stop]
        scores = user_repr[np.asarray(batch, dtype=np.int64)] @ item_repr.T
        out: list[tuple[int, dict[int, tuple[float, float]]]] = []
        for row, u in zip(scores, batch, strict=True):
            exclusion = excluded.get(u, ())
            ranking = rank_scores(row, exclusion)[:depth].tolist()
            test_items = held_out.per_user_items[u]
            out.append((u, {k: (recall_at_k(ranking, test_items, k), ndcg_at_k(ranking, test_items, k)) for k in cutoffs}))
        return out

    chunks = pool.map_ranges(_chunk, len(users), EVAL_CHUNK) if pool is not None else [_chunk(0, len(users))]
    return {u: values for chunk in chunks for u, values in chunk}


def evaluate(
    model: Recommender,
    split: DataSplit,
    ks: Iterable[int] = (5, 20),
    *,
    tag: str | None = None,
    part: str = "test",
    pool: ChunkedPool | None = None,
) -> list[MetricsRow]:
    """Mean metrics over users with a non-empty held-out set, one row per cutoff.

    Args:
        model: Model to rank with.
        split: Data split; train (and valid, for test) positives are excluded from rankings.
        ks: Cutoffs.
        tag: Model tag for the rows; defaults to the model kind.
        part: ``"test"`` or ``"valid"``.
        pool: Optional worker pool.

    Returns:
        One :class:`MetricsRow` per cutoff, ascending.

    """
    if part not in ("test", "valid"):
        raise ValueError(f"Unknown evaluation part {part!r}")
    per_user = per_user_metrics(model, split, ks, part=part, pool=pool)
    users = sorted(per_user)
    rows: list[MetricsRow] = []
    for k in sorted(set(ks)):
        n = len(users)
        recall = math.fsum(per_user[u][k][0] for u in users) / n if n else 0.0
        ndcg = math.fsum(per_user[u][k][1] for u in users) / n if n else 0.0
        rows.append(MetricsRow(model=tag or model.kind, k=k, recall=recall, ndcg=ndcg, n_users=n))
    if not users:
        logger.warning(f"No user has {part} items; metrics default to zero")
    return rows


def write_metrics_jsonl(path: str | os.PathLike[str], rows: Iterable[MetricsRow]) -> Path:
    """Write metrics rows as JSON lines."""
    return write_jsonl_atomic(path, (row.to_dict() for row in rows))
