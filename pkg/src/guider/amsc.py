"""Adaptive modality similarity calibration.

Each user's train interactions are split by loss against the user's mean
loss. High-loss ("spurious") items are moved back into the clean set when
their modal similarity to some low-loss ("reliable") item, scaled by how
consistently their text and vision features hash to the same code, exceeds
a threshold.
"""

import math
import os
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path

import numpy as np
from loguru import logger

from .artifacts import write_jsonl_atomic
from .data.features import ModalFeatureTable
from .data.interactions import InteractionDataset
from .losses import per_interaction_losses
from .partition import PartitionInvariantError, UserPartition
from .protocols import FloatArray, Recommender
from .workers import ChunkedPool

__all__ = [
    "HashProjector",
    "ModalSimilarity",
    "PartitionInvariantError",
    "UserPartition",
    "calibrate",
    "combined_similarity",
    "confidence",
    "modal_similarity",
    "partition_by_loss",
    "run_amsc",
    "write_partitions_jsonl",
]

USER_CHUNK = 32


class HashProjector:
    """Fixed random sign projections of text and vision features into a common ``k``-bit space.

    One Gaussian matrix is drawn over a coordinate frame wide enough for both
    modalities and each modality uses its leading columns, so aligned feature
    spaces hash consistently. Biases are zero unless ``bias`` is set, which
    keeps codes invariant to positive rescaling of the features.
    """

    def __init__(self, k: int, dim_text: int, dim_vision: int, *, seed: int, bias: bool = False) -> None:
        """Draw the projection matrices.

        Args:
            k: Number of hash bits.
            dim_text: Text feature width.
            dim_vision: Vision feature width.
            seed: Seed of the Gaussian draw.
            bias: Draw Gaussian offsets instead of zeros.

        """
        super().__init__()
        if k <= 0 or dim_text <= 0 or dim_vision <= 0:
            raise ValueError(f"Hash dimensions must be positive, got k={k}, text={dim_text}, vision={dim_vision}")
        rng = np.random.default_rng(seed)
        frame = rng.standard_normal((k, max(dim_text, dim_vision)))
        self.k = k
        self.seed = seed
        self.w_text: FloatArray = frame[:, :dim_text].copy()
        self.w_vision: FloatArray = frame[:, :dim_vision].copy()
        if bias:
            self.b_text: FloatArray = rng.standard_normal(k)
            self.b_vision: FloatArray = rng.standard_normal(k)
        else:
            self.b_text = np.zeros(k)
            self.b_vision = np.zeros(k)
        for block in (self.w_text, self.w_vision, self.b_text, self.b_vision):
            block.flags.writeable = False

    @staticmethod
    def _sign(x: FloatArray) -> FloatArray:
        # sign(0) is +1
        return np.where(x >= 0.0, 1.0, -1.0)

    def hash_text(self, rows: FloatArray) -> FloatArray:
        """``sign(W_text x + b_text)`` for one row or a matrix of rows."""
        return self._sign(rows @ self.w_text.T + self.b_text)

    def hash_vision(self, rows: FloatArray) -> FloatArray:
        """``sign(W_vision x + b_vision)`` for one row or a matrix of rows."""
        return self._sign(rows @ self.w_vision.T + self.b_vision)


def _check_item(i: int, text: ModalFeatureTable, vision: ModalFeatureTable) -> None:
    if not 0 <= i < min(text.n_items, vision.n_items):
        raise IndexError(f"No feature row for item {i} (text rows={text.n_items}, vision rows={vision.n_items})")


def _cosine(x: FloatArray, y: FloatArray) -> float:
    return float(x @ y / (np.linalg.norm(x) * np.linalg.norm(y)))


def modal_similarity(i: int, i_other: int, text: ModalFeatureTable, vision: ModalFeatureTable) -> float:
    """Larger of the text and vision cosine similarities of two items."""
    _check_item(i, text, vision)
    _check_item(i_other, text, vision)
    return max(_cosine(text.matrix[i], text.matrix[i_other]), _cosine(vision.matrix[i], vision.matrix[i_other]))


def confidence(i: int, proj: HashProjector, text: ModalFeatureTable, vision: ModalFeatureTable) -> float:
    """Agreement of item ``i``'s text and vision hash codes: ``(matches - mismatches) / k``."""
    _check_item(i, text, vision)
    return float(np.mean(proj.hash_text(text.matrix[i]) * proj.hash_vision(vision.matrix[i])))


def combined_similarity(i: int, i_other: int, proj: HashProjector, text: ModalFeatureTable, vision: ModalFeatureTable) -> float:
    """Modal similarity of ``(i, i_other)`` weighted by the confidence of ``i`` alone."""
    return modal_similarity(i, i_other, text, vision) * confidence(i, proj, text, vision)


class ModalSimilarity:
    """Precomputed normalized features and per-item confidences for bulk calibration."""

    def __init__(self, proj: HashProjector, text: ModalFeatureTable, vision: ModalFeatureTable) -> None:
        """Normalize both tables and hash every item once."""
        super().__init__()
        if text.n_items != vision.n_items:
            raise ValueError(f"Feature tables disagree on item count: text={text.n_items}, vision={vision.n_items}")
        self.proj = proj
        self._text = text.normalized()
        self._vision = vision.normalized()
        self.confidences: FloatArray = np.mean(proj.hash_text(text.matrix) * proj.hash_vision(vision.matrix), axis=1)

    @property
    def n_items(self) -> int:
        return int(self._text.shape[0])

    def modal_block(self, items: Iterable[int], others: Iterable[int]) -> FloatArray:
        """``S_modal`` for every pair of the two item lists."""
        rows = np.fromiter(items, dtype=np.int64)
        cols = np.fromiter(others, dtype=np.int64)
        return np.maximum(self._text[rows] @ self._text[cols].T, self._vision[rows] @ self._vision[cols].T)

    def calibrate(self, reliable: tuple[int, ...], spurious: tuple[int, ...], s_thres: float) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Rescue spurious items that closely resemble some reliable item.

        Returns:
            ``(true_set, false_set)``, each sorted by item index.

        """
        if not spurious or not reliable:
            return tuple(sorted(reliable)), tuple(sorted(spurious))
        combined = self.modal_block(spurious, reliable) * self.confidences[np.asarray(spurious, dtype=np.int64)][:, None]
        rescued = np.any(combined > s_thres, axis=1)
        true_set = sorted([*reliable, *(i for i, keep in zip(spurious, rescued.tolist(), strict=True) if keep)])
        false_set = sorted(i for i, keep in zip(spurious, rescued.tolist(), strict=True) if not keep)
        return tuple(true_set), tuple(false_set)


def partition_by_loss(user: int, losses: Mapping[int, float]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split a user's items into those at or below the mean loss and those above it.

    Raises:
        ValueError: ``losses`` is empty.

    """
    if not losses:
        raise ValueError(f"User {user} has no interaction losses to partition")
    values = list(losses.values())
    if max(values) == min(values):
        return tuple(sorted(losses)), ()
    mean = math.fsum(values) / len(values)
    reliable = tuple(sorted(i for i, loss in losses.items() if loss <= mean))
    spurious = tuple(sorted(i for i, loss in losses.items() if loss > mean))
    return reliable, spurious


def calibrate(
    user: int,
    reliable: Iterable[int],
    spurious: Iterable[int],
    proj: HashProjector,
    text: ModalFeatureTable,
    vision: ModalFeatureTable,
    s_thres: float,
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Calibrated ``(true_set, false_set)`` of one user's loss partition."""
    rel, spr = tuple(reliable), tuple(spurious)
    for i in (*rel, *spr):
        _check_item(i, text, vision)
    true_set, false_set = ModalSimilarity(proj, text, vision).calibrate(rel, spr, s_thres)
    logger.trace(f"User {user}: rescued {len(true_set) - len(rel)} of {len(spr)} spurious items")
    return true_set, false_set


def run_amsc(
    model: Recommender,
    train: InteractionDataset,
    similarity: ModalSimilarity,
    s_thres: float,
    *,
    use_calibration: bool = True,
    pool: ChunkedPool | None = None,
) -> dict[int, UserPartition]:
    """Partition and calibrate every user with at least one train interaction.

    Args:
        model: Model whose per-interaction losses drive the partition (frozen during the call).
        train: Train interactions.
        similarity: Precomputed features and confidences.
        s_thres: Calibration threshold.
        use_calibration: When false the loss partition is used as is.
        pool: Optional worker pool; results do not depend on it.

    Returns:
        Partitions keyed by user index.

    """
    losses = per_interaction_losses(model, train, pool=pool)
    by_user: dict[int, dict[int, float]] = defaultdict(dict)
    for (u, i), loss in losses.items():
        by_user[u][i] = loss
    users = sorted(by_user)

    def _chunk(chunk: Sequence[int]) -> list[UserPartition]:
        out: list[UserPartition] = []
        for u in chunk:
            reliable, spurious = partition_by_loss(u, by_user[u])
            if use_calibration:
                true_set, false_set = similarity.calibrate(reliable, spurious, s_thres)
            else:
                true_set, false_set = reliable, spurious
            out.append(UserPartition(user=u, reliable=reliable, spurious=spurious, true_set=true_set, false_set=false_set))
        return out

    chunks = pool.map_chunks(_chunk, users, USER_CHUNK) if pool is not None else [_chunk(users)]
    partitions = {p.user: p for chunk in chunks for p in chunk}
    n_spurious = sum(len(p.spurious) for p in partitions.values())
    n_false = sum(len(p.false_set) for p in partitions.values())
    logger.debug(f"AMSC: {len(partitions)} users, {n_spurious} spurious, {n_spurious - n_false} rescued, {n_false} flagged noisy")
    return partitions


def write_partitions_jsonl(path: str | os.PathLike[str], partitions: Mapping[int, UserPartition]) -> Path:
    """Dump partitions as JSON lines in user order."""
    return write_jsonl_atomic(path, (partitions[u].to_dict() for u in sorted(partitions)))
