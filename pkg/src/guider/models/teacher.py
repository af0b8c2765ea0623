"""ID-only teacher: matrix factorization with optional LightGCN-style propagation."""

import numpy as np
import scipy.sparse as sp

from ..protocols import FloatArray, IntArray
from .base import ModelKind

__all__ = ["TeacherModel", "build_normalized_adjacency", "propagate"]


def build_normalized_adjacency(n_users: int, n_items: int, users: IntArray, items: IntArray) -> sp.csr_matrix:
    """Symmetric-normalized bipartite adjacency ``D^-1/2 A D^-1/2``.

    Users occupy rows ``0..n_users-1`` and items the following ``n_items`` rows.
    Nodes without edges keep a zero row instead of a division by zero.
    """
    n = n_users + n_items
    rows = np.concatenate([users, items + n_users])
    cols = np.concatenate([items + n_users, users])
    adjacency = sp.coo_matrix((np.ones(rows.size, dtype=np.float64), (rows, cols)), shape=(n, n)).tocsr()
    degree = np.asarray(adjacency.sum(axis=1), dtype=np.float64).ravel()
    inv_sqrt = np.zeros_like(degree)
    nonzero = degree > 0
    inv_sqrt[nonzero] = degree[nonzero] ** -0.5
    scale = sp.diags(inv_sqrt)
    return sp.csr_matrix(scale @ adjacency @ scale)


class TeacherModel:
    """ID-embedding recommender; ``n_layers == 0`` is plain matrix factorization."""

    def __init__(self, user_emb: FloatArray, item_emb: FloatArray, *, n_layers: int, adjacency: sp.csr_matrix | None = None, seed: int = 0) -> None:
        """Initialize the teacher.

        Args:
            user_emb: ``n_users x d`` layer-0 user embeddings.
            item_emb: ``n_items x d`` layer-0 item embeddings.
            n_layers: Propagation depth.
            adjacency: Normalized train adjacency, required when ``n_layers > 0``.
            seed: Initialization seed, kept for checkpoints.

        """
        super().__init__()
        if n_layers < 0:
            raise ValueError(f"n_layers must be non-negative, got {n_layers}")
        if user_emb.shape[1] != item_emb.shape[1]:
            raise ValueError(f"Embedding widths differ: {user_emb.shape} vs {item_emb.shape}")
        if n_layers > 0:
            n = user_emb.shape[0] + item_emb.shape[0]
            if adjacency is None:
                raise ValueError("A normalized adjacency is required when n_layers > 0")
            if adjacency.shape != (n, n):
                raise ValueError(f"Adjacency shape {adjacency.shape} does not match {n} nodes")
        self._params: dict[str, FloatArray] = {"user_emb": user_emb, "item_emb": item_emb}
        self.n_layers = n_layers
        self.adjacency = adjacency
        self.seed = seed
        self._cache: tuple[FloatArray, FloatArray] | None = None

    @property
    def kind(self) -> str:
        return ModelKind.TEACHER

    @property
    def n_users(self) -> int:
        return int(self._params["user_emb"].shape[0])

    @property
    def n_items(self) -> int:
        return int(self._params["item_emb"].shape[0])

    @property
    def d(self) -> int:
        return int(self._params["user_emb"].shape[1])

    @property
    def params(self) -> dict[str, FloatArray]:
        return self._params

    def smooth(self, stacked: FloatArray) -> FloatArray:
        """Mean of ``A^0 x .. A^L x``; linear and self-adjoint because ``A`` is symmetric."""
        if self.n_layers == 0 or self.adjacency is None:
            return stacked
        total = stacked.copy()
        layer = stacked
        for _ in range(self.n_layers):
            layer = np.asarray(self.adjacency @ layer, dtype=np.float64)
            total += layer
        return total / (self.n_layers + 1)

    def representations(self) -> tuple[FloatArray, FloatArray]:
        """Effective embeddings, cached until :meth:`invalidate`."""
        if self._cache is None:
            self._cache = propagate(self)
        return self._cache

    def backward(self, grad_users: FloatArray, grad_items: FloatArray) -> dict[str, FloatArray]:
        """Pull gradients on effective embeddings back to the layer-0 tables."""
        if self.n_layers == 0:
            return {"user_emb": grad_users, "item_emb": grad_items}
        pulled = self.smooth(np.vstack([grad_users, grad_items]))
        return {"user_emb": pulled[: self.n_users], "item_emb": pulled[self.n_users :]}

    def invalidate(self) -> None:
        self._cache = None


def propagate(teacher: TeacherModel) -> tuple[FloatArray, FloatArray]:
    """Effective user and item embeddings after neighborhood averaging.

    With ``n_layers == 0`` the base tables are returned unchanged.
    """
    users = teacher.params["user_emb"]
    items = teacher.params["item_emb"]
    if teacher.n_layers == 0:
        return users, items
    smoothed = teacher.smooth(np.vstack([users, items]))
    return smoothed[: teacher.n_users], smoothed[teacher.n_users :]
