"""Shared model plumbing: Xavier initialization, scoring and parameter checks."""

from enum import StrEnum

import numpy as np

from ..protocols import FloatArray, Recommender

__all__ = ["ModelKind", "assert_finite", "score", "score_all", "xavier_uniform"]


class ModelKind(StrEnum):
    """Which of the two recommenders a model is."""

    TEACHER = "teacher"
    STUDENT = "student"


def xavier_uniform(rng: np.random.Generator, rows: int, cols: int) -> FloatArray:
    """Sample ``U(-a, a)`` with ``a = sqrt(6 / (rows + cols))``."""
    if rows <= 0 or cols <= 0:
        raise ValueError(f"Parameter dimensions must be positive, got {rows}x{cols}")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def score(model: Recommender, u: int, i: int) -> float:
    """Inner product of the effective user and item representations."""
    if not 0 <= u < model.n_users:
        raise IndexError(f"User index {u} out of range [0, {model.n_users})")
    if not 0 <= i < model.n_items:
        raise IndexError(f"Item index {i} out of range [0, {model.n_items})")
    users, items = model.representations()
    return float(users[u] @ items[i])


def score_all(model: Recommender, u: int) -> FloatArray:
    """Scores of user ``u`` against every item."""
    if not 0 <= u < model.n_users:
        raise IndexError(f"User index {u} out of range [0, {model.n_users})")
    users, items = model.representations()
    return items @ users[u]


def assert_finite(model: Recommender) -> None:
    """Raise when any parameter block holds a non-finite value."""
    for name, block in model.params.items():
        if not np.all(np.isfinite(block)):
            raise FloatingPointError(f"{model.kind} parameter block {name!r} contains non-finite values")
