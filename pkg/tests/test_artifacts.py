"""Tests for the atomic artifact writers."""

import json
from pathlib import Path
from unittest.mock import patch

import pandas as pd
import pytest

from guider.artifacts import read_jsonl, write_bytes_atomic, write_frame_atomic, write_json_atomic, write_jsonl_atomic


class TestAtomicWriters:
    """Test cases for the artifact writers."""

    def test_json_sorted_and_indented(self, tmp_path: Path) -> None:
        """Test JSON output is key-sorted, indented and newline-terminated."""
        path = write_json_atomic(tmp_path / "sub" / "a.json", {"b": 1, "a": [1, 2]})
        text = path.read_text(encoding="utf-8")
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")
        assert json.loads(text) == {"a": [1, 2], "b": 1}

    def test_jsonl_round_trip(self, tmp_path: Path) -> None:
        """Test JSON-lines rows read back in order."""
        rows = [{"model": "teacher", "K": 5}, {"model": "student", "K": 20}]
        path = write_jsonl_atomic(tmp_path / "m.jsonl", rows)
        assert read_jsonl(path) == rows
        assert path.read_text(encoding="utf-8").splitlines()[0] == '{"K": 5, "model": "teacher"}'

    def test_read_jsonl_skips_blank_lines(self, tmp_path: Path) -> None:
        """Test blank lines are ignored."""
        path = tmp_path / "x.jsonl"
        path.write_text('{"a": 1}\n\n{"a": 2}\n', encoding="utf-8")
        assert read_jsonl(path) == [{"a": 1}, {"a": 2}]

    def test_frame_without_index(self, tmp_path: Path) -> None:
        """Test tables are written without the index and with the chosen separator."""
        frame = pd.DataFrame({"user": [0, 1], "item": [3, 4]})
        path = write_frame_atomic(tmp_path / "t.tsv", frame, sep="\t", header=False)
        assert path.read_text(encoding="utf-8") == "0\t3\n1\t4\n"

    def test_bytes(self, tmp_path: Path) -> None:
        """Test binary payloads are written verbatim."""
        path = write_bytes_atomic(tmp_path / "b.bin", b"\x00GMD1")
        assert path.read_bytes() == b"\x00GMD1"

    def test_overwrite_replaces_content(self, tmp_path: Path) -> None:
        """Test rewriting a file replaces it entirely."""
        path = tmp_path / "a.json"
        _ = write_json_atomic(path, {"long": "x" * 100})
        _ = write_json_atomic(path, {"a": 1})
        assert json.loads(path.read_text(encoding="utf-8")) == {"a": 1}

    def test_failed_write_leaves_no_temp_and_keeps_original(self, tmp_path: Path) -> None:
        """Test a failure mid-write keeps the old file and removes the temporary sibling."""
        path = tmp_path / "a.json"
        _ = write_json_atomic(path, {"a": 1})
        with patch("guider.artifacts.os.replace", side_effect=OSError("disk full")):
            with pytest.raises(OSError, match="disk full"):
                _ = write_json_atomic(path, {"a": 2})
        assert json.loads(path.read_text(encoding="utf-8")) == {"a": 1}
        assert not (tmp_path / "a.json.tmp").exists()
