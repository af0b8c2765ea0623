"""Per-item modal feature tables and the GMF1 binary format."""

import os
from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from ..artifacts import write_bytes_atomic
from ..protocols import FloatArray
from .interactions import DatasetError

__all__ = ["FeatureError", "ModalFeatureTable", "Modality", "align_to_items", "encode_gmf1", "load_modal_features", "save_modal_features"]

GMF1_MAGIC = b"GMF1"
_HEADER_DTYPE = np.dtype("<u4")
_VALUE_DTYPE = np.dtype("<f4")


class FeatureError(DatasetError):
    """Raised when a feature table is malformed; carries the offending row/column when known."""

    def __init__(self, message: str, *, row: int | None = None, col: int | None = None) -> None:
        """Initialize with optional 0-based row and column."""
        location = f" at row {row}, col {col}" if row is not None and col is not None else (f" at row {row}" if row is not None else "")
        super().__init__(f"{message}{location}")
        self.row = row
        self.col = col


class Modality(StrEnum):
    """Content modality of a feature table."""

    TEXT = "text"
    VISION = "vision"


@dataclass(frozen=True, kw_only=True)
class ModalFeatureTable:
    """Dense ``n_items x dim`` feature matrix of one modality.

    The matrix is stored read-only in float64; every entry is finite and no
    row is all zeros (cosine similarity must be defined for every item).
    """

    modality: Modality
    matrix: FloatArray

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=np.float64, copy=True)
        if matrix.ndim != 2 or matrix.shape[0] == 0 or matrix.shape[1] == 0:
            raise FeatureError(f"{self.modality} features must be a non-empty 2-D matrix, got shape {matrix.shape}")
        bad = np.argwhere(~np.isfinite(matrix))
        if bad.size:
            raise FeatureError(f"Non-finite {self.modality} feature value", row=int(bad[0][0]), col=int(bad[0][1]))
        zero_rows = np.flatnonzero(~matrix.any(axis=1))
        if zero_rows.size:
            raise FeatureError(f"All-zero {self.modality} feature row", row=int(zero_rows[0]))
        matrix.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)

    @property
    def n_items(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def normalized(self) -> FloatArray:
        """Rows scaled to unit Euclidean norm."""
        return self.matrix / np.linalg.norm(self.matrix, axis=1, keepdims=True)


def encode_gmf1(matrix: FloatArray) -> bytes:
    """Serialize a matrix as ``GMF1`` + rows + cols (u32 LE) + row-major f32 LE values."""
    rows, cols = matrix.shape
    header = np.array([rows, cols], dtype=_HEADER_DTYPE).tobytes()
    return GMF1_MAGIC + header + np.ascontiguousarray(matrix, dtype=_VALUE_DTYPE).tobytes()


def _decode_gmf1(payload: bytes, source: Path) -> FloatArray:
    if len(payload) < 12 or payload[:4] != GMF1_MAGIC:
        raise FeatureError(f"{source} is not a GMF1 feature file")
    rows, cols = (int(v) for v in np.frombuffer(payload, dtype=_HEADER_DTYPE, count=2, offset=4))
    expected = 12 + rows * cols * _VALUE_DTYPE.itemsize
    if len(payload) != expected:
        raise FeatureError(f"{source} declares {rows}x{cols} values but holds {len(payload) - 12} bytes of data")
    return np.frombuffer(payload, dtype=_VALUE_DTYPE, offset=12).reshape(rows, cols).astype(np.float64)


def load_modal_features(path: str | os.PathLike[str], modality: Modality | str, n_items: int | None = None) -> ModalFeatureTable:
    """Load a GMF1 binary or headerless CSV feature file.

    Args:
        path: Feature file; ``.csv`` files are read as text, anything else as GMF1.
        modality: Modality of the table.
        n_items: Expected row count (the dataset's item count), checked when given.

    Returns:
        The validated table.

    """
    source = Path(path)
    if not source.exists():
        raise FeatureError(f"Feature file not found: {source}")

    if source.suffix.lower() == ".csv":
        try:
            matrix = pd.read_csv(source, header=None, dtype=np.float64).to_numpy()
        except (ValueError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise FeatureError(f"Malformed feature CSV {source}: {e}") from e
    else:
        matrix = _decode_gmf1(source.read_bytes(), source)

    if n_items is not None and matrix.shape[0] != n_items:
        raise FeatureError(f"{source} has {matrix.shape[0]} rows but the dataset has {n_items} items")

    table = ModalFeatureTable(modality=Modality(modality), matrix=matrix)
    logger.info(f"Loaded {table.modality} features {table.n_items}x{table.dim} from {source}")
    return table


def save_modal_features(table: ModalFeatureTable, path: str | os.PathLike[str]) -> Path:
    """Write a table in GMF1 format."""
    return write_bytes_atomic(path, encode_gmf1(table.matrix))


def align_to_items(table: ModalFeatureTable, item_tokens: tuple[str, ...], n_items: int) -> ModalFeatureTable:
    """Order feature rows by dense item index.

    When every raw item token is a non-negative integer, that integer is the
    item's feature row and the rows are gathered accordingly; otherwise the
    table must already hold one row per dense item.
    """
    if item_tokens and all(token.isdecimal() for token in item_tokens):
        rows = np.fromiter((int(token) for token in item_tokens), dtype=np.int64, count=len(item_tokens))
        if int(rows.max()) >= table.n_items:
            raise FeatureError(f"Item token {int(rows.max())} has no {table.modality} feature row ({table.n_items} rows)")
        if np.array_equal(rows, np.arange(table.n_items)):
            return table
        return ModalFeatureTable(modality=table.modality, matrix=table.matrix[rows])
    if table.n_items != n_items:
        raise FeatureError(f"{table.modality} features have {table.n_items} rows but the dataset has {n_items} items")
    return table
