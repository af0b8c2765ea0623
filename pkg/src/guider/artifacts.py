"""Atomic writers for run artifacts (JSON, JSON lines, delimited tables, binary)."""

import json
import os
from collections.abc import Callable, Iterable, Mapping
from pathlib import Path
from typing import IO, Any

import pandas as pd
from loguru import logger

__all__ = ["read_jsonl", "write_bytes_atomic", "write_frame_atomic", "write_json_atomic", "write_jsonl_atomic"]


def _replace_atomically(path: Path, write: Callable[[IO[Any]], None], *, binary: bool = False) -> None:
    """Write through a sibling temporary file, fsync it, then swap it into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_name(path.name + ".tmp")
    try:
        if binary:
            with open(tmp_path, "wb") as f:
                write(f)
                f.flush()
                os.fsync(f.fileno())
        else:
            with open(tmp_path, "w", encoding="utf-8", newline="") as f:
                write(f)
                f.flush()
                os.fsync(f.fileno())
        os.replace(tmp_path, path)
    except Exception:
        if tmp_path.exists():
            tmp_path.unlink()
        raise

    try:
        dir_fd = os.open(path.parent, os.O_RDONLY)
        try:
            os.fsync(dir_fd)
        finally:
            os.close(dir_fd)
    except OSError:
        pass  # fsync on dir not supported on all platforms
    logger.debug(f"Wrote {path}")


def write_json_atomic(path: str | os.PathLike[str], payload: Any) -> Path:
    """Write ``payload`` as indented, key-sorted JSON."""
    target = Path(path)

    def _write(f: IO[Any]) -> None:
        json.dump(payload, f, indent=2, ensure_ascii=False, sort_keys=True)
        _ = f.write("\n")

    _replace_atomically(target, _write)
    return target


def write_jsonl_atomic(path: str | os.PathLike[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    """Write one key-sorted JSON object per line."""
    target = Path(path)

    def _write(f: IO[Any]) -> None:
        for row in rows:
            _ = f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")

    _replace_atomically(target, _write)
    return target


def write_frame_atomic(path: str | os.PathLike[str], frame: pd.DataFrame, *, sep: str = ",", header: bool = True) -> Path:
    """Write a data frame as a delimited text table without the index."""
    target = Path(path)

    def _write(f: IO[Any]) -> None:
        frame.to_csv(f, sep=sep, index=False, header=header, lineterminator="\n")

    _replace_atomically(target, _write)
    return target


def write_bytes_atomic(path: str | os.PathLike[str], data: bytes) -> Path:
    """Write a binary payload."""
    target = Path(path)

    def _write(f: IO[Any]) -> None:
        _ = f.write(data)

    _replace_atomically(target, _write, binary=True)
    return target


def read_jsonl(path: str | os.PathLike[str]) -> list[dict[str, Any]]:
    """Read a JSON-lines file, skipping blank lines."""
    rows: list[dict[str, Any]] = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rows.append(json.loads(line))
    return rows
