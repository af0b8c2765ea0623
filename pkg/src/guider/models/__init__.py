"""Teacher and student recommenders."""

from dataclasses import dataclass

import numpy as np

from ..data.features import ModalFeatureTable
from ..data.interactions import InteractionDataset
from .base import ModelKind, assert_finite, score, score_all, xavier_uniform
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .student import StudentModel, student_item_repr
from .teacher import TeacherModel, build_normalized_adjacency, propagate

__all__ = [
    "CheckpointError",
    "ModelKind",
    "ModelShape",
    "StudentModel",
    "TeacherModel",
    "assert_finite",
    "build_normalized_adjacency",
    "init_model",
    "load_checkpoint",
    "propagate",
    "save_checkpoint",
    "score",
    "score_all",
    "student_item_repr",
    "xavier_uniform",
]


@dataclass(frozen=True, kw_only=True)
class ModelShape:
    """Dimensions needed to build either model."""

    n_users: int
    n_items: int
    d: int = 64
    n_layers: int = 0


def init_model(
    kind: ModelKind | str,
    shape: ModelShape,
    seed: int,
    *,
    train: InteractionDataset | None = None,
    text: ModalFeatureTable | None = None,
    vision: ModalFeatureTable | None = None,
) -> TeacherModel | StudentModel:
    """Create a Xavier-initialized model.

    Args:
        kind: ``"teacher"`` or ``"student"``.
        shape: User/item counts, latent width and (teacher) propagation depth.
        seed: Initialization seed.
        train: Train interactions for the teacher adjacency (``n_layers > 0``).
        text: Text features (student).
        vision: Vision features (student).

    Returns:
        The initialized model.

    """
    if shape.n_users <= 0 or shape.n_items <= 0 or shape.d <= 0:
        raise ValueError(f"Model dimensions must be positive, got {shape}")
    rng = np.random.default_rng(seed)
    model_kind = ModelKind(kind)

    if model_kind is ModelKind.TEACHER:
        adjacency = None
        if shape.n_layers > 0:
            if train is None:
                raise ValueError("Train interactions are required to build the teacher adjacency")
            users, items = train.as_arrays()
            adjacency = build_normalized_adjacency(shape.n_users, shape.n_items, users, items)
        return TeacherModel(
            xavier_uniform(rng, shape.n_users, shape.d),
            xavier_uniform(rng, shape.n_items, shape.d),
            n_layers=shape.n_layers,
            adjacency=adjacency,
            seed=seed,
        )

    if text is None or vision is None:
        raise ValueError("Text and vision features are required to build the student")
    return StudentModel(
        xavier_uniform(rng, shape.n_users, shape.d),
        xavier_uniform(rng, shape.n_items, shape.d),
        xavier_uniform(rng, shape.d, text.dim),
        xavier_uniform(rng, shape.d, vision.dim),
        text=text,
        vision=vision,
        seed=seed,
    )
