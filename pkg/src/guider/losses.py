"""Recommendation losses with analytic parameter gradients.

Scalar losses (:func:`bce_loss`, :func:`bpr_loss`) report gradients with
respect to their score arguments. Model-level losses
(:func:`pairwise_ranking_loss`, :func:`pointwise_loss`, :func:`dbpr_loss`)
return gradients for every parameter block of the model, computed on the
effective representations and mapped back through ``model.backward``.
"""

import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike
from scipy.special import expit, log_expit

from .data.interactions import InteractionDataset
from .partition import UserPartition
from .protocols import FloatArray, IntArray, Recommender
from .sampling import DegeneratePartitionError, PointwiseBatch, TripleSampler, Triples
from .workers import ChunkedPool

__all__ = [
    "DegeneratePartitionError",
    "LossValue",
    "bce_loss",
    "bpr_loss",
    "dbpr_loss",
    "interaction_losses",
    "pairwise_backward",
    "pairwise_deltas",
    "pairwise_ranking_loss",
    "per_interaction_losses",
    "pointwise_loss",
]

GRAD_CHUNK = 64
LOSS_CHUNK = 1024


@dataclass(frozen=True, kw_only=True)
class LossValue:
    """A summed loss and its gradients keyed by parameter block (or score argument)."""

    value: float
    grad: dict[str, FloatArray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise FloatingPointError(f"Loss value is not finite: {self.value}")

    def scaled(self, weight: float) -> "LossValue":
        return LossValue(value=weight * self.value, grad={name: weight * g for name, g in self.grad.items()})

    def __add__(self, other: "LossValue") -> "LossValue":
        grad = dict(self.grad)
        for name, g in other.grad.items():
            grad[name] = grad[name] + g if name in grad else g
        return LossValue(value=self.value + other.value, grad=grad)


def bce_loss(s: ArrayLike, r: ArrayLike) -> LossValue:
    """Pointwise binary cross-entropy on sigmoid scores.

    ``l = -r log sigma(s) - (1 - r) log(1 - sigma(s))`` summed over the inputs,
    evaluated with ``log_expit`` so large ``|s|`` never overflows.

    Args:
        s: Score or array of scores.
        r: Matching labels in ``{0, 1}``.

    Returns:
        The summed loss with ``grad["score"] = sigma(s) - r``.

    """
    scores = np.asarray(s, dtype=np.float64)
    labels = np.asarray(r, dtype=np.float64)
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise ValueError("BCE labels must be 0 or 1")
    per = -labels * log_expit(scores) - (1.0 - labels) * log_expit(-scores)
    return LossValue(value=math.fsum(np.ravel(per)), grad={"score": expit(scores) - labels})


def bpr_loss(s_pos: ArrayLike, s_neg: ArrayLike) -> LossValue:
    """``-log sigma(s_pos - s_neg)`` summed, with gradients for both score arguments."""
    delta = np.asarray(s_pos, dtype=np.float64) - np.asarray(s_neg, dtype=np.float64)
    slack = expit(-delta)
    return LossValue(value=math.fsum(np.ravel(-log_expit(delta))), grad={"s_pos": -slack, "s_neg": slack})


def _run_chunks[R](n: int, fn: Callable[[int, int], R], pool: ChunkedPool | None) -> list[R]:
    if pool is None:
        return [fn(start, min(start + GRAD_CHUNK, n)) for start in range(0, n, GRAD_CHUNK)]
    return pool.map_ranges(fn, n, GRAD_CHUNK)


def pairwise_backward(model: Recommender, triples: Triples, g_delta: FloatArray, *, pool: ChunkedPool | None = None) -> dict[str, FloatArray]:
    """Parameter gradients of ``sum_b g_delta[b] * (s_ui - s_uj)``.

    Chunks accumulate into private dense buffers which are merged in chunk
    order, so the result does not depend on the thread count.
    """
    users_repr, items_repr = model.representations()

    def _chunk(start: int, stop: int) -> tuple[FloatArray, FloatArray]:
        u, i, j = triples.users[start:stop], triples.pos[start:stop], triples.neg[start:stop]
        g = g_delta[start:stop, None]
        hu = users_repr[u]
        grad_users = np.zeros_like(users_repr)
        grad_items = np.zeros_like(items_repr)
        np.add.at(grad_users, u, g * (items_repr[i] - items_repr[j]))
        np.add.at(grad_items, i, g * hu)
        np.add.at(grad_items, j, -g * hu)
        return grad_users, grad_items

    grad_users = np.zeros_like(users_repr)
    grad_items = np.zeros_like(items_repr)
    for gu, gi in _run_chunks(len(triples), _chunk, pool):
        grad_users += gu
        grad_items += gi
    return model.backward(grad_users, grad_items)


def pairwise_deltas(model: Recommender, triples: Triples) -> FloatArray:
    """``s_ui - s_uj`` for every triple."""
    users_repr, items_repr = model.representations()
    hu = users_repr[triples.users]
    return np.einsum("bd,bd->b", hu, items_repr[triples.pos] - items_repr[triples.neg])


def pairwise_ranking_loss(model: Recommender, triples: Triples, *, pool: ChunkedPool | None = None) -> LossValue:
    """Summed BPR loss over ``triples`` with gradients for every parameter block."""
    if len(triples) == 0:
        raise DegeneratePartitionError("Cannot compute a ranking loss over an empty batch")
    delta = pairwise_deltas(model, triples)
    # d(-log sigma(delta))/d delta
    g_delta = -expit(-delta)
    value = math.fsum(-log_expit(delta))
    return LossValue(value=value, grad=pairwise_backward(model, triples, g_delta, pool=pool))


def pointwise_loss(model: Recommender, batch: PointwiseBatch) -> LossValue:
    """Summed BCE over labeled ``(user, item)`` rows with parameter gradients."""
    users_repr, items_repr = model.representations()
    hu = users_repr[batch.users]
    hi = items_repr[batch.items]
    scores = np.einsum("bd,bd->b", hu, hi)
    bce = bce_loss(scores, batch.labels)
    g = bce.grad["score"][:, None]
    grad_users = np.zeros_like(users_repr)
    grad_items = np.zeros_like(items_repr)
    np.add.at(grad_users, batch.users, g * hi)
    np.add.at(grad_items, batch.items, g * hu)
    return LossValue(value=bce.value, grad=model.backward(grad_users, grad_items))


def dbpr_loss(
    model: Recommender,
    partitions: Mapping[int, UserPartition],
    sampler: TripleSampler,
    batch_size: int,
    rng: np.random.Generator,
    *,
    pool: ChunkedPool | None = None,
) -> LossValue:
    """Denoising BPR: ``-sum log sigma(s_ui - s_uj)`` with ``i`` clean and ``j`` noisy.

    Users whose true or false set is empty are skipped by the sampler.

    Raises:
        DegeneratePartitionError: No user can supply a clean/noisy pair.

    """
    triples = sampler.from_partitions(partitions, batch_size, rng)
    return pairwise_ranking_loss(model, triples, pool=pool)


def interaction_losses(model: Recommender, users: IntArray, items: IntArray) -> FloatArray:
    """Positive-label BCE ``-log sigma(s_ui)`` for each ``(user, item)`` row."""
    users_repr, items_repr = model.representations()
    scores = np.einsum("bd,bd->b", users_repr[users], items_repr[items])
    return -log_expit(scores)


def per_interaction_losses(model: Recommender, ds: InteractionDataset, *, pool: ChunkedPool | None = None) -> dict[tuple[int, int], float]:
    """Loss of every positive interaction in ``ds`` under the current model state."""
    users, items = ds.as_arrays()
    if users.size == 0:
        return {}

    def _chunk(start: int, stop: int) -> FloatArray:
        return interaction_losses(model, users[start:stop], items[start:stop])

    if pool is None:
        losses = interaction_losses(model, users, items)
    else:
        losses = np.concatenate(pool.map_ranges(_chunk, int(users.size), LOSS_CHUNK))
    logger.debug(f"Computed {losses.size} interaction losses (mean {float(losses.mean()):.4f})")
    return dict(zip(zip(users.tolist(), items.tolist(), strict=True), losses.tolist(), strict=True))
