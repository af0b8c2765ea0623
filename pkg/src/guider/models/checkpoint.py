"""GMD1 model checkpoints: magic, length-prefixed JSON header, raw f32 blocks."""

import json
import os
from pathlib import Path
from typing import Any

import numpy as np

from ..artifacts import write_bytes_atomic
from ..data.features import ModalFeatureTable
from ..data.interactions import InteractionDataset
from ..protocols import Recommender
from .base import ModelKind
from .student import StudentModel
from .teacher import TeacherModel, build_normalized_adjacency

__all__ = ["CheckpointError", "load_checkpoint", "save_checkpoint"]

GMD1_MAGIC = b"GMD1"
_LENGTH_DTYPE = np.dtype("<u4")
_VALUE_DTYPE = np.dtype("<f4")


class CheckpointError(Exception):
    """Raised when a checkpoint cannot be read or does not match the requested model."""


def save_checkpoint(model: Recommender, path: str | os.PathLike[str]) -> Path:
    """Serialize ``model`` to ``path``."""
    if not isinstance(model, TeacherModel | StudentModel):
        raise CheckpointError(f"Cannot checkpoint a {type(model).__name__}")
    blocks = list(model.params.items())
    dims: dict[str, int] = {"n_users": model.n_users, "n_items": model.n_items, "d": model.d}
    if isinstance(model, StudentModel):
        dims |= {"dim_text": model.text.dim, "dim_vision": model.vision.dim}
    header: dict[str, Any] = {
        "kind": str(model.kind),
        "dims": dims,
        "n_layers": model.n_layers if isinstance(model, TeacherModel) else 0,
        "seed": model.seed,
        "blocks": [{"name": name, "shape": list(block.shape)} for name, block in blocks],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = bytearray(GMD1_MAGIC)
    payload += np.array([len(header_bytes)], dtype=_LENGTH_DTYPE).tobytes()
    payload += header_bytes
    for _, block in blocks:
        payload += np.ascontiguousarray(block, dtype=_VALUE_DTYPE).tobytes()
    return write_bytes_atomic(path, bytes(payload))


def _read(path: Path) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    payload = path.read_bytes()
    if len(payload) < 8 or payload[:4] != GMD1_MAGIC:
        raise CheckpointError(f"{path} is not a GMD1 checkpoint")
    header_len = int(np.frombuffer(payload, dtype=_LENGTH_DTYPE, count=1, offset=4)[0])
    try:
        header = json.loads(payload[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Malformed checkpoint header in {path}: {e}") from e

    offset = 8 + header_len
    blocks: dict[str, np.ndarray] = {}
    for spec in header.get("blocks", []):
        shape = tuple(int(s) for s in spec["shape"])
        count = int(np.prod(shape))
        end = offset + count * _VALUE_DTYPE.itemsize
        if end > len(payload):
            raise CheckpointError(f"Checkpoint {path} is truncated in block {spec['name']!r}")
        blocks[spec["name"]] = np.frombuffer(payload, dtype=_VALUE_DTYPE, count=count, offset=offset).reshape(shape).astype(np.float64)
        offset = end
    if offset != len(payload):
        raise CheckpointError(f"Checkpoint {path} has {len(payload) - offset} trailing bytes")
    return header, blocks


def load_checkpoint(
    path: str | os.PathLike[str],
    *,
    expected_kind: ModelKind | str | None = None,
    train: InteractionDataset | None = None,
    text: ModalFeatureTable | None = None,
    vision: ModalFeatureTable | None = None,
) -> TeacherModel | StudentModel:
    """Restore a model.

    Args:
        path: Checkpoint file.
        expected_kind: Reject checkpoints of another kind when given.
        train: Train interactions; rebuilds the teacher adjacency when ``n_layers > 0``.
        text: Text features, required for students.
        vision: Vision features, required for students.

    Returns:
        The restored model.

    """
    source = Path(path)
    header, blocks = _read(source)
    kind = header.get("kind")
    if expected_kind is not None and kind != str(expected_kind):
        raise CheckpointError(f"{source} holds a {kind} model, expected {expected_kind}")

    try:
        if kind == ModelKind.TEACHER:
            n_layers = int(header["n_layers"])
            adjacency = None
            if n_layers > 0:
                if train is None:
                    raise CheckpointError(f"{source} needs train interactions to rebuild its {n_layers}-layer adjacency")
                users, items = train.as_arrays()
                adjacency = build_normalized_adjacency(train.n_users, train.n_items, users, items)
            return TeacherModel(blocks["user_emb"], blocks["item_emb"], n_layers=n_layers, adjacency=adjacency, seed=int(header["seed"]))
        if kind == ModelKind.STUDENT:
            if text is None or vision is None:
                raise CheckpointError(f"{source} is a student checkpoint; text and vision features are required")
            return StudentModel(
                blocks["user_emb"], blocks["item_id_emb"], blocks["proj_text"], blocks["proj_vision"], text=text, vision=vision, seed=int(header["seed"])
            )
    except KeyError as e:
        raise CheckpointError(f"{source} is missing {e}") from e
    except ValueError as e:
        raise CheckpointError(f"{source} does not fit the given data: {e}") from e
    raise CheckpointError(f"{source} has unknown model kind {kind!r}")
