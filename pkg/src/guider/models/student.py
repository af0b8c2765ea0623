"""Multi-modal student: ID embedding plus projected text and vision features."""

import numpy as np

from ..data.features import ModalFeatureTable
from ..protocols import FloatArray
from .base import ModelKind

__all__ = ["StudentModel", "student_item_repr"]


class StudentModel:
    """VBPR-style recommender with additive fusion into the shared ``d``-space.

    ``h_i = item_id_emb[i] + proj_text @ T_i + proj_vision @ V_i`` and
    ``h_u = user_emb[u]``.
    """

    def __init__(
        self,
        user_emb: FloatArray,
        item_id_emb: FloatArray,
        proj_text: FloatArray,
        proj_vision: FloatArray,
        *,
        text: ModalFeatureTable,
        vision: ModalFeatureTable,
        seed: int = 0,
    ) -> None:
        """Initialize the student with its parameters and the feature tables it fuses."""
        super().__init__()
        d = user_emb.shape[1]
        if item_id_emb.shape[1] != d or proj_text.shape[0] != d or proj_vision.shape[0] != d:
            raise ValueError(f"Projection outputs must have width {d}: item {item_id_emb.shape}, text {proj_text.shape}, vision {proj_vision.shape}")
        if proj_text.shape[1] != text.dim or proj_vision.shape[1] != vision.dim:
            raise ValueError(f"Projection inputs {proj_text.shape[1]}/{proj_vision.shape[1]} do not match feature dims {text.dim}/{vision.dim}")
        if text.n_items != item_id_emb.shape[0] or vision.n_items != item_id_emb.shape[0]:
            raise ValueError(f"Feature tables have {text.n_items}/{vision.n_items} rows for {item_id_emb.shape[0]} items")
        self._params: dict[str, FloatArray] = {"user_emb": user_emb, "item_id_emb": item_id_emb, "proj_text": proj_text, "proj_vision": proj_vision}
        self.text = text
        self.vision = vision
        self.seed = seed
        self._cache: tuple[FloatArray, FloatArray] | None = None

    @property
    def kind(self) -> str:
        return ModelKind.STUDENT

    @property
    def n_users(self) -> int:
        return int(self._params["user_emb"].shape[0])

    @property
    def n_items(self) -> int:
        return int(self._params["item_id_emb"].shape[0])

    @property
    def d(self) -> int:
        return int(self._params["user_emb"].shape[1])

    @property
    def params(self) -> dict[str, FloatArray]:
        return self._params

    def representations(self) -> tuple[FloatArray, FloatArray]:
        if self._cache is None:
            p = self._params
            items = p["item_id_emb"] + self.text.matrix @ p["proj_text"].T + self.vision.matrix @ p["proj_vision"].T
            self._cache = (p["user_emb"], items)
        return self._cache

    def backward(self, grad_users: FloatArray, grad_items: FloatArray) -> dict[str, FloatArray]:
        return {
            "user_emb": grad_users,
            "item_id_emb": grad_items,
            "proj_text": grad_items.T @ self.text.matrix,
            "proj_vision": grad_items.T @ self.vision.matrix,
        }

    def invalidate(self) -> None:
        self._cache = None


def student_item_repr(student: StudentModel, i: int, text: ModalFeatureTable, vision: ModalFeatureTable) -> FloatArray:
    """Fused representation of item ``i`` from the given feature tables."""
    if not 0 <= i < student.n_items:
        raise IndexError(f"Item index {i} out of range [0, {student.n_items})")
    if i >= text.n_items or i >= vision.n_items:
        raise IndexError(f"No feature row for item {i} (text rows={text.n_items}, vision rows={vision.n_items})")
    p = student.params
    return np.asarray(p["item_id_emb"][i] + p["proj_text"] @ text.matrix[i] + p["proj_vision"] @ vision.matrix[i], dtype=np.float64)
