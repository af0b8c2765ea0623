"""Main entry point for the guider package."""

import argparse
import json
import os
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path
from typing import Any

from loguru import logger

from .amsc import HashProjector, ModalSimilarity, run_amsc, write_partitions_jsonl
from .artifacts import write_json_atomic, write_jsonl_atomic
from .config import ConfigError, Mode, RunConfig, SinkhornConfig
from .data.features import Modality, align_to_items, load_modal_features
from .data.interactions import DatasetError, load_interactions
from .data.split import DataSplit, inject_noise, load_split, save_split, split_per_user
from .data.synthetic import generate_synthetic, save_corpus
from .evaluation.diagnostics import noise_detection_report, score_distribution_report, threshold_sweep
from .evaluation.metrics import evaluate, write_metrics_jsonl
from .models import CheckpointError, load_checkpoint
from .seeding import Stage, stage_seed
from .selftest import DEFAULT_SELFTEST_SINKHORN, run_selftest
from .training.pipeline import RESOLVED_CONFIG, StageError, run_experiments
from .workers import ChunkedPool

EXIT_FAILURE = 1
EXIT_SELFTEST_FAILED = 2

# train flags that map one-to-one onto configuration keys
_TRAIN_FLAG_KEYS = {
    "config_seed": "seed",
    "mode": "train.mode",
    "kd": "train.kd",
    "cost": "train.cost",
    "noise_ratio": "data.noise_ratios",
    "lambdas": "train.lambdas",
    "threads": "train.threads",
    "interactions": "paths.interactions",
    "text": "paths.text_features",
    "vision": "paths.vision_features",
    "split_dir": "paths.split_dir",
    "output": "paths.output_dir",
}


def setup_logging(level: str | None = None) -> None:
    """Set up structured logging."""
    # Remove default logger
    logger.remove()

    colorize = os.environ.get("NO_COLOR") is None and sys.stderr.isatty()
    log_level = (level or os.environ.get("LOG_LEVEL", "INFO")).upper()

    # Console logging with colors and formatting
    _ = logger.add(
        sys.stderr,
        level=log_level,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> | <level>{message}</level>"
        if colorize
        else "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} | {message}",
        colorize=colorize,
        backtrace=True,
        diagnose=True,
    )

    log_file = os.environ.get("LOG_FILE")
    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        _ = logger.add(
            log_path,
            level=log_level,
            format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} | {message}",
            rotation="10 MB",
            retention="1 week",
            compression="gz",
            backtrace=True,
            diagnose=True,
        )
        logger.debug(f"File logging enabled: {log_path}")


def parse_overrides(extra: Sequence[str]) -> dict[str, str]:
    """Turn ``--section.key value`` / ``--section.key=value`` tokens into flat config keys."""
    overrides: dict[str, str] = {}
    tokens = list(extra)
    k = 0
    while k < len(tokens):
        token = tokens[k]
        if not token.startswith("--") or "." not in token.split("=", 1)[0]:
            raise ConfigError(f"Unrecognized argument: {token}")
        key, sep, value = token[2:].partition("=")
        if not sep:
            if k + 1 >= len(tokens) or tokens[k + 1].startswith("--"):
                raise ConfigError(f"Override {token} needs a value")
            k += 1
            value = tokens[k]
        overrides[key] = value
        k += 1
    return overrides


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one sub-command per pipeline step."""
    parser = argparse.ArgumentParser(prog="guider", description="Modality-guided denoising and optimal-transport distillation for recommenders.")
    parser.add_argument("--log-level", default=None, help="Logging level (default: LOG_LEVEL or INFO)")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="Generate a planted-cluster corpus")
    synth.add_argument("output", help="Output directory")
    synth.add_argument("--config", default=None, help="JSON configuration file")
    synth.add_argument("--seed", type=int, default=None)
    synth.add_argument("--users", type=int, default=None)
    synth.add_argument("--items", type=int, default=None)
    synth.add_argument("--clusters", type=int, default=None)
    synth.add_argument("--per-user", type=int, default=None, help="Interactions per user")
    synth.add_argument("--inconsistent-frac", type=float, default=None)

    split = commands.add_parser("split", help="Split interactions per user into train/valid/test")
    split.add_argument("interactions", help="Interaction TSV/CSV file")
    split.add_argument("output", help="Split directory")
    split.add_argument("--format", choices=("tsv", "csv"), default=None)
    split.add_argument("--ratios", default="8,1,1", help="Train/valid/test weights")
    split.add_argument("--seed", type=int, default=0)

    noise = commands.add_parser("inject-noise", help="Add oracle noise to a split's train part")
    noise.add_argument("split_dir", help="Split directory to read")
    noise.add_argument("--ratio", type=float, required=True)
    noise.add_argument("--seed", type=int, default=0)
    noise.add_argument("--output", default=None, help="Directory for the noisy split (default: in place)")

    train = commands.add_parser("train", help="Run the training pipeline (extra --section.key value pairs override the config)")
    train.add_argument("--config", default=None, help="JSON configuration file")
    train.add_argument("--seed", dest="config_seed", type=int, default=None)
    train.add_argument("--mode", default=None, help="guider | plain | teacher-only | no-kd | no-dbpr | no-amsc")
    train.add_argument("--kd", default=None, help="ot | kl | none")
    train.add_argument("--cost", default=None, help="raw | normalized")
    train.add_argument("--noise-ratio", default=None, help="Comma-separated injection ratios")
    train.add_argument("--lambdas", default=None, help="Comma-separated Sinkhorn regularizations")
    train.add_argument("--interleaved", action="store_true", help="Alternate teacher and student epochs")
    train.add_argument("--threads", type=int, default=None)
    train.add_argument("--interactions", default=None)
    train.add_argument("--text", default=None)
    train.add_argument("--vision", default=None)
    train.add_argument("--split-dir", default=None)
    train.add_argument("--output", default=None)

    ev = commands.add_parser("eval", help="Evaluate a checkpoint on a split")
    ev.add_argument("checkpoint")
    ev.add_argument("split_dir")
    ev.add_argument("--kind", choices=("teacher", "student"), default=None, help="Reject checkpoints of the other kind")
    ev.add_argument("--text", default=None)
    ev.add_argument("--vision", default=None)
    ev.add_argument("--ks", default="5,20")
    ev.add_argument("--part", choices=("test", "valid"), default="test")
    ev.add_argument("--threads", type=int, default=0)
    ev.add_argument("--output", default=None, help="Metrics JSONL (default: next to the checkpoint)")

    diag = commands.add_parser("diagnose", help="Score histograms, partitions and noise detection")
    diag.add_argument("teacher", help="Teacher checkpoint")
    diag.add_argument("split_dir")
    diag.add_argument("--text", required=True)
    diag.add_argument("--vision", required=True)
    diag.add_argument("--student", default=None, help="Optional student checkpoint")
    diag.add_argument("--config", default=None, help="Run configuration (default: config.resolved.json next to the teacher)")
    diag.add_argument("--s-thres", type=float, default=None, help="Calibration threshold (default: from the configuration)")
    diag.add_argument("--thresholds", default=None, help="Comma-separated S_thres sweep")
    diag.add_argument("--hash-bits", type=int, default=None)
    diag.add_argument("--sample-frac", type=float, default=0.1)
    diag.add_argument("--seed", type=int, default=None, help="Root seed (default: from the configuration)")
    diag.add_argument("--threads", type=int, default=0)
    diag.add_argument("--output", required=True)

    st = commands.add_parser("selftest", help="Numerical self-test of solver, gradients and calibration")
    st.add_argument("--tol", type=float, default=DEFAULT_SELFTEST_SINKHORN.tol)
    st.add_argument("--max-iter", type=int, default=DEFAULT_SELFTEST_SINKHORN.max_iter)
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--output", default=None, help="Report JSON (default: stdout)")
    return parser


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _load_features(split: DataSplit, text_path: str | None, vision_path: str | None) -> dict[str, Any]:
    if text_path is None or vision_path is None:
        return {}
    tokens = split.train.item_tokens
    return {
        "text": align_to_items(load_modal_features(text_path, Modality.TEXT), tokens, split.n_items),
        "vision": align_to_items(load_modal_features(vision_path, Modality.VISION), tokens, split.n_items),
    }


def cmd_synth(args: argparse.Namespace) -> int:
    """Generate a corpus and write its interactions, features and ground truth."""
    cfg = RunConfig.load(args.config, {"seed": args.seed} if args.seed is not None else None)
    flags = {"n_users": args.users, "n_items": args.items, "n_clusters": args.clusters, "interactions_per_user": args.per_user, "inconsistent_frac": args.inconsistent_frac}
    synth_cfg = replace(cfg.synth, **{k: v for k, v in flags.items() if v is not None})
    corpus = generate_synthetic(synth_cfg, stage_seed(cfg.seed, Stage.SYNTHESIS))
    written = save_corpus(corpus, args.output)
    logger.info(f"✅ Wrote {', '.join(str(p) for p in written.values())}")
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    """Split a raw interaction file into a split directory."""
    ratios = tuple(int(r) for r in args.ratios.split(","))
    dataset = load_interactions(args.interactions, args.format)
    _ = save_split(split_per_user(dataset, ratios, args.seed), args.output)
    return 0


def cmd_inject_noise(args: argparse.Namespace) -> int:
    """Inject noise into a split directory's train part."""
    noisy, report = inject_noise(load_split(args.split_dir), args.ratio, args.seed)
    _ = save_split(noisy, args.output or args.split_dir, report)
    return 0


def train_config(args: argparse.Namespace, extra: Sequence[str]) -> RunConfig:
    """Resolve the training configuration: file, environment, flags, then dotted overrides."""
    overrides: dict[str, Any] = {key: getattr(args, attr) for attr, key in _TRAIN_FLAG_KEYS.items() if getattr(args, attr) is not None}
    if args.interleaved:
        overrides["train.interleaved"] = True
    overrides.update(parse_overrides(extra))
    cfg = RunConfig.load(args.config, overrides)
    cfg.validate_paths()
    return cfg


def cmd_train(args: argparse.Namespace, extra: Sequence[str]) -> int:
    """Run every configured (noise ratio, lambda) combination of the pipeline."""
    cfg = train_config(args, extra)
    results = run_experiments(cfg)
    logger.info(f"✅ {len(results)} run(s) written under {cfg.paths.output_dir}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    """Evaluate one checkpoint and write its metrics rows."""
    split = load_split(args.split_dir)
    features = _load_features(split, args.text, args.vision)
    model = load_checkpoint(args.checkpoint, expected_kind=args.kind, train=split.train, **features)
    ks = tuple(int(k) for k in args.ks.split(","))
    with ChunkedPool(args.threads) as pool:
        rows = evaluate(model, split, ks, part=args.part, pool=pool)
    checkpoint = Path(args.checkpoint)
    output = Path(args.output) if args.output else checkpoint.with_name(f"{checkpoint.stem}_eval.jsonl")
    _ = write_metrics_jsonl(output, rows)
    for row in rows:
        logger.info(f"📈 {row.model} Recall@{row.k} {row.recall:.4f} NDCG@{row.k} {row.ndcg:.4f}")
    return 0


def diagnose_config(args: argparse.Namespace) -> RunConfig:
    """The configuration a checkpoint was trained with, with diagnose flags on top.

    Without ``--config`` the run's ``config.resolved.json`` next to the teacher
    checkpoint is used when present, so hashing and calibration match training.
    """
    path: str | Path | None = args.config
    if path is None:
        resolved = Path(args.teacher).with_name(RESOLVED_CONFIG)
        if resolved.exists():
            path = resolved
            logger.info(f"Using run configuration {resolved}")
    flags = {"seed": args.seed, "amsc.s_thres": args.s_thres, "amsc.hash_bits": args.hash_bits}
    return RunConfig.load(path, {k: v for k, v in flags.items() if v is not None})


def cmd_diagnose(args: argparse.Namespace) -> int:
    """Write score histograms, partitions, the noise report and an optional threshold sweep."""
    cfg = diagnose_config(args)
    out = Path(args.output)
    split = load_split(args.split_dir)
    features = _load_features(split, args.text, args.vision)
    text, vision = features["text"], features["vision"]
    teacher = load_checkpoint(args.teacher, expected_kind="teacher", train=split.train)
    models = [teacher]
    if args.student:
        models.append(load_checkpoint(args.student, expected_kind="student", train=split.train, text=text, vision=vision))

    summary: dict[str, Any] = {}
    if split.train.injected_pairs():
        for model in models:
            distribution = score_distribution_report(model, split.train, sample_frac=args.sample_frac, seed=stage_seed(cfg.seed, Stage.DIAGNOSTICS))
            _ = distribution.write_csv(out / f"{model.kind}_scores.csv")
            summary[str(model.kind)] = distribution.summary()
        _ = write_json_atomic(out / "score_summary.json", summary)
    else:
        logger.warning("⚠️ The split has no injected interactions; skipping score histograms and noise detection")

    amsc = cfg.amsc
    proj = HashProjector(amsc.hash_bits, text.dim, vision.dim, seed=stage_seed(cfg.seed, Stage.HASHING), bias=amsc.hash_bias)
    similarity = ModalSimilarity(proj, text, vision)
    with ChunkedPool(args.threads) as pool:
        partitions = run_amsc(teacher, split.train, similarity, amsc.s_thres, use_calibration=cfg.train.mode is not Mode.NO_AMSC, pool=pool)
        _ = write_partitions_jsonl(out / "partitions.jsonl", partitions)
        injected = split.train.injected_pairs()
        if injected:
            detection = noise_detection_report(partitions, injected, len(split.train))
            _ = write_json_atomic(out / "noise_detection.json", detection.to_dict())
            logger.info(f"📊 Noise detection at S_thres={amsc.s_thres}: precision {detection.precision:.4f}, recall {detection.recall:.4f}, lift {detection.lift:.2f}")
            if args.thresholds:
                _ = write_jsonl_atomic(out / "threshold_sweep.jsonl", threshold_sweep(teacher, split.train, similarity, _floats(args.thresholds), pool=pool))
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    """Run the self-test and print or write its JSON report."""
    cfg = SinkhornConfig(lam=DEFAULT_SELFTEST_SINKHORN.lam, max_iter=args.max_iter, tol=args.tol, log_domain=True)
    report = run_selftest(cfg, seed=args.seed)
    if args.output:
        _ = write_json_atomic(args.output, report.to_dict())
    else:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0 if report.passed else EXIT_SELFTEST_FAILED


def main(argv: Sequence[str] | None = None) -> int:
    """Main entry point; returns the process exit code."""
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    if extra and args.command != "train":
        parser.error(f"unrecognized arguments: {' '.join(extra)}")

    setup_logging(args.log_level)
    logger.debug(f"Python version: {sys.version}")
    logger.debug(f"Working directory: {Path.cwd()}")

    try:
        match args.command:
            case "synth":
                return cmd_synth(args)
            case "split":
                return cmd_split(args)
            case "inject-noise":
                return cmd_inject_noise(args)
            case "train":
                return cmd_train(args, extra)
            case "eval":
                return cmd_eval(args)
            case "diagnose":
                return cmd_diagnose(args)
            case "selftest":
                return cmd_selftest(args)
            case _:
                parser.error(f"unknown command {args.command!r}")

    except StageError as e:
        logger.error(f"Pipeline failed: {e}")
        return EXIT_FAILURE

    except (ConfigError, DatasetError, CheckpointError) as e:
        logger.error(f"{type(e).__name__}: {e!s}")
        return EXIT_FAILURE

    except Exception as e:
        logger.error(f"Unexpected error: {type(e).__name__} - {e!s}")
        # Print full traceback to stderr for debugging
        import traceback

        logger.error("Full traceback:")
        for line in traceback.format_exc().splitlines():
            logger.error(line)
        return EXIT_FAILURE


def sync_main() -> None:
    """Console-script wrapper for main."""
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        sys.exit(130)


if __name__ == "__main__":
    sync_main()
