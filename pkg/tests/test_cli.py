"""Tests for the command-line entry point."""

import json
import os
from pathlib import Path
from unittest.mock import patch

import pytest

from guider.__main__ import EXIT_FAILURE, EXIT_SELFTEST_FAILED, build_parser, diagnose_config, main, parse_overrides
from guider.amsc import HashProjector, run_amsc
from guider.artifacts import write_json_atomic
from guider.config import ConfigError, Mode
from guider.data import load_split
from guider.seeding import Stage, stage_seed
from guider.selftest import CheckResult, SelfTestReport
from guider.training.pipeline import RESOLVED_CONFIG

SYNTH_FLAGS = ["--users", "30", "--items", "20", "--clusters", "3", "--per-user", "6"]

# Keeps a developer's env file out of the runs.
ISOLATED_ENV = {"GUIDER_ENV_FILE": "/nonexistent/guider.env", "NO_COLOR": "1"}


@pytest.fixture
def prepared(tmp_path: Path) -> Path:
    """A synthetic corpus with a noisy split under ``tmp_path``."""
    with patch.dict(os.environ, ISOLATED_ENV, clear=True):
        assert main(["synth", str(tmp_path / "corpus"), "--seed", "5", *SYNTH_FLAGS]) == 0
        assert main(["split", str(tmp_path / "corpus" / "interactions.tsv"), str(tmp_path / "split"), "--seed", "1"]) == 0
        assert main(["inject-noise", str(tmp_path / "split"), "--ratio", "0.1", "--seed", "2"]) == 0
    return tmp_path


class TestParseOverrides:
    """Test cases for parse_overrides."""

    def test_both_spellings(self) -> None:
        """Test separate and ``=`` values."""
        assert parse_overrides(["--train.lr", "1e-3", "--model.d=16"]) == {"train.lr": "1e-3", "model.d": "16"}

    def test_empty(self) -> None:
        """Test no tokens give no overrides."""
        assert parse_overrides([]) == {}

    @pytest.mark.parametrize("tokens", [["--lr", "1"], ["train.lr", "1"], ["--train.lr"], ["--train.lr", "--model.d", "4"]])
    def test_rejected(self, tokens: list[str]) -> None:
        """Test undotted keys and missing values are rejected."""
        with pytest.raises(ConfigError):
            _ = parse_overrides(tokens)


class TestDataCommands:
    """Test cases for synth, split and inject-noise."""

    def test_synth_is_reproducible(self, tmp_path: Path) -> None:
        """Test the same seed writes byte-identical files."""
        with patch.dict(os.environ, ISOLATED_ENV, clear=True):
            assert main(["synth", str(tmp_path / "a"), "--seed", "9", *SYNTH_FLAGS]) == 0
            assert main(["synth", str(tmp_path / "b"), "--seed", "9", *SYNTH_FLAGS]) == 0
        for name in ("interactions.tsv", "text.gmf", "vision.gmf", "ground_truth.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
        truth = json.loads((tmp_path / "a" / "ground_truth.json").read_text())
        assert truth["n_users"] == 30
        assert truth["n_items"] == 20

    def test_split_and_noise(self, prepared: Path) -> None:
        """Test the split carries the injected pairs and the noise report."""
        split = load_split(prepared / "split")
        assert split.train.injected_pairs()
        assert (prepared / "split" / "noise_report.json").is_file()

    def test_inject_noise_to_other_directory(self, prepared: Path) -> None:
        """Test --output leaves the source split untouched."""
        before = (prepared / "split" / "train.tsv").read_bytes()
        with patch.dict(os.environ, ISOLATED_ENV, clear=True):
            assert main(["inject-noise", str(prepared / "split"), "--ratio", "0.05", "--output", str(prepared / "noisier")]) == 0
        assert (prepared / "split" / "train.tsv").read_bytes() == before
        assert (prepared / "noisier" / "split_manifest.json").is_file()

    def test_split_missing_file(self, tmp_path: Path) -> None:
        """Test a missing interaction file exits with failure."""
        with patch.dict(os.environ, ISOLATED_ENV, clear=True):
            assert main(["split", str(tmp_path / "none.tsv"), str(tmp_path / "split")]) == EXIT_FAILURE

    def test_unknown_flags_rejected(self, tmp_path: Path) -> None:
        """Test extra arguments are only accepted by train."""
        with pytest.raises(SystemExit):
            _ = main(["synth", str(tmp_path), "--model.d", "4"])


class TestTrainAndEval:
    """Test cases for train, eval and diagnose."""

    def train_args(self, prepared: Path, *extra: str) -> list[str]:
        return [
            "train",
            "--split-dir",
            str(prepared / "split"),
            "--text",
            str(prepared / "corpus" / "text.gmf"),
            "--vision",
            str(prepared / "corpus" / "vision.gmf"),
            "--output",
            str(prepared / "run"),
            "--threads",
            "1",
            "--model.d",
            "4",
            "--model.n_layers",
            "1",
            "--train.max_epochs",
            "2",
            "--train.warmup_epochs",
            "1",
            "--train.batch_size",
            "32",
            "--train.kd_batch_size",
            "16",
            *extra,
        ]

    def test_train_then_eval(self, prepared: Path) -> None:
        """Test a training run followed by evaluation of its checkpoints."""
        with patch.dict(os.environ, ISOLATED_ENV, clear=True):
            assert main(self.train_args(prepared)) == 0
            run = prepared / "run"
            assert (run / "teacher.gmd").is_file()
            assert (run / "student.gmd").is_file()
            flat = json.loads((run / "config.resolved.json").read_text())
            assert flat["model.d"] == 4
            assert flat["train.threads"] == 1

            out = prepared / "eval.jsonl"
            assert main(["eval", str(run / "teacher.gmd"), str(prepared / "split"), "--kind", "teacher", "--ks", "5,10", "--output", str(out)]) == 0
            rows = [json.loads(line) for line in out.read_text().splitlines()]
            assert [row["K"] for row in rows] == [5, 10]

            student_args = ["--text", str(prepared / "corpus" / "text.gmf"), "--vision", str(prepared / "corpus" / "vision.gmf")]
            assert main(["eval", str(run / "student.gmd"), str(prepared / "split"), "--kind", "student", *student_args]) == 0
            assert (run / "student_eval.jsonl").is_file()

    def test_eval_kind_mismatch(self, prepared: Path) -> None:
        """Test evaluating a teacher as a student exits with failure."""
        with patch.dict(os.environ, ISOLATED_ENV, clear=True):
            assert main(self.train_args(prepared, "--mode", "teacher-only")) == 0
            assert main(["eval", str(prepared / "run" / "teacher.gmd"), str(prepared / "split"), "--kind", "student"]) == EXIT_FAILURE

    def test_diagnose(self, prepared: Path) -> None:
        """Test diagnostics on a trained teacher."""
        with patch.dict(os.environ, ISOLATED_ENV, clear=True):
            assert main(self.train_args(prepared, "--mode", "teacher-only")) == 0
            out = prepared / "diag"
            args = [
                "diagnose",
                str(prepared / "run" / "teacher.gmd"),
                str(prepared / "split"),
                "--text",
                str(prepared / "corpus" / "text.gmf"),
                "--vision",
                str(prepared / "corpus" / "vision.gmf"),
                "--hash-bits",
                "16",
                "--thresholds",
                "0.5,0.85",
                "--output",
                str(out),
            ]
            assert main(args) == 0
        for name in ("teacher_scores.csv", "score_summary.json", "partitions.jsonl", "noise_detection.json", "threshold_sweep.jsonl"):
            assert (out / name).is_file(), name
        assert len((out / "threshold_sweep.jsonl").read_text().splitlines()) == 2

    def test_diagnose_uses_run_configuration(self, prepared: Path) -> None:
        """Test diagnose rebuilds hashing and calibration from the run's resolved configuration."""
        extra = ("--mode", "teacher-only", "--seed", "99", "--amsc.hash_bits", "16", "--amsc.hash_bias", "true", "--amsc.s_thres", "0.6")
        args = [
            "diagnose",
            str(prepared / "run" / "teacher.gmd"),
            str(prepared / "split"),
            "--text",
            str(prepared / "corpus" / "text.gmf"),
            "--vision",
            str(prepared / "corpus" / "vision.gmf"),
            "--output",
            str(prepared / "diag"),
        ]
        with patch.dict(os.environ, ISOLATED_ENV, clear=True):
            assert main(self.train_args(prepared, *extra)) == 0
            with patch("guider.__main__.HashProjector", wraps=HashProjector) as projector, patch("guider.__main__.run_amsc", wraps=run_amsc) as amsc:
                assert main(args) == 0
        assert projector.call_args.args[0] == 16
        assert projector.call_args.kwargs["seed"] == stage_seed(99, Stage.HASHING)
        assert projector.call_args.kwargs["bias"] is True
        assert amsc.call_args.args[3] == 0.6

    def test_diagnose_flags_override_configuration(self, prepared: Path) -> None:
        """Test explicit diagnose flags win over the resolved configuration."""
        run = prepared / "run"
        run.mkdir()
        _ = write_json_atomic(run / RESOLVED_CONFIG, {"seed": 99, "amsc.hash_bits": 16, "amsc.s_thres": 0.6, "train.mode": "no-amsc"})
        namespace = build_parser().parse_args(["diagnose", str(run / "teacher.gmd"), str(prepared / "split"), "--text", "t", "--vision", "v", "--output", "o", "--seed", "5"])
        with patch.dict(os.environ, ISOLATED_ENV, clear=True):
            cfg = diagnose_config(namespace)
        assert cfg.seed == 5
        assert cfg.amsc.hash_bits == 16
        assert cfg.amsc.s_thres == 0.6
        assert cfg.train.mode is Mode.NO_AMSC

    def test_unknown_override_fails(self, prepared: Path) -> None:
        """Test a misspelled dotted override exits with failure."""
        with patch.dict(os.environ, ISOLATED_ENV, clear=True):
            assert main(self.train_args(prepared, "--train.bogus", "1")) == EXIT_FAILURE

    def test_missing_inputs_fail(self, tmp_path: Path) -> None:
        """Test train without any data source exits with failure."""
        with patch.dict(os.environ, ISOLATED_ENV, clear=True):
            assert main(["train", "--output", str(tmp_path / "run")]) == EXIT_FAILURE


class TestSelftestCommand:
    """Test cases for the selftest command."""

    def test_failed_report_exit_code(self, tmp_path: Path) -> None:
        """Test a failing report maps to its own exit code and is written."""
        failing = SelfTestReport(checks=[CheckResult(name="sinkhorn.marginal_feasibility", passed=False, value=1.0, threshold=1e-8)])
        out = tmp_path / "selftest.json"
        with patch.dict(os.environ, ISOLATED_ENV, clear=True), patch("guider.__main__.run_selftest", return_value=failing) as run:
            assert main(["selftest", "--tol", "1e30", "--output", str(out)]) == EXIT_SELFTEST_FAILED
        assert run.call_args.args[0].tol == 1e30
        assert json.loads(out.read_text())["failed"] == ["sinkhorn.marginal_feasibility"]

    def test_passing_report_prints(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test a passing report exits zero and prints JSON."""
        with patch.dict(os.environ, ISOLATED_ENV, clear=True), patch("guider.__main__.run_selftest", return_value=SelfTestReport()):
            assert main(["selftest"]) == 0
        assert json.loads(capsys.readouterr().out)["passed"] is True
