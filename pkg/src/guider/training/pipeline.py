"""End-to-end runs: load, split, inject noise, train teacher and student, evaluate."""

import os
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from loguru import logger

from ..amsc import HashProjector, ModalSimilarity, write_partitions_jsonl
from ..artifacts import write_json_atomic, write_jsonl_atomic
from ..config import ConfigError, KdKind, Mode, RunConfig
from ..data.features import ModalFeatureTable, Modality, align_to_items, load_modal_features
from ..data.interactions import load_interactions
from ..data.split import DataSplit, NoiseReport, inject_noise, load_split, split_per_user
from ..evaluation.diagnostics import NoiseDetection, noise_detection_report
from ..evaluation.metrics import MetricsRow, evaluate, write_metrics_jsonl
from ..models import ModelKind, ModelShape, init_model, save_checkpoint
from ..partition import UserPartition
from ..protocols import Recommender
from ..seeding import Stage, stage_rng, stage_seed
from ..workers import ChunkedPool
from .denoise import DenoisingTrainer
from .distillation import DistillationTrainer
from .loop import EpochTrainer
from .report import TrainReport

__all__ = ["RESOLVED_CONFIG", "PreparedData", "RunResult", "StageError", "load_data", "run_experiments", "run_guider", "stage", "with_noise"]

RESOLVED_CONFIG = "config.resolved.json"
TEACHER_MODES = frozenset({Mode.GUIDER, Mode.TEACHER_ONLY, Mode.NO_DBPR, Mode.NO_AMSC})


class StageError(Exception):
    """Wraps any failure with the pipeline stage it happened in."""

    def __init__(self, stage_name: str, cause: BaseException) -> None:
        """Initialize with the stage tag and the original exception."""
        super().__init__(f"[{stage_name}] {type(cause).__name__}: {cause}")
        self.stage = stage_name
        self.cause = cause


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Tag any exception raised inside the block with ``name``."""
    logger.info(f"▶️ Stage: {name}")
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, e) from e


@dataclass(frozen=True, kw_only=True)
class PreparedData:
    """A split with aligned feature tables and, after injection, its noise report."""

    split: DataSplit
    text: ModalFeatureTable
    vision: ModalFeatureTable
    noise: NoiseReport | None = None


@dataclass(kw_only=True)
class RunResult:
    """Everything one run produced."""

    output_dir: Path
    metrics: list[MetricsRow] = field(default_factory=lambda: list[MetricsRow]())
    reports: dict[str, TrainReport] = field(default_factory=lambda: dict[str, TrainReport]())
    partitions: dict[int, UserPartition] = field(default_factory=lambda: dict[int, UserPartition]())
    noise_detection: NoiseDetection | None = None


def load_data(cfg: RunConfig) -> PreparedData:
    """Load (or split) interactions and the two feature tables named by ``cfg.paths``."""
    paths = cfg.paths
    with stage("load"):
        if paths.split_dir is not None:
            split = load_split(paths.split_dir)
        elif paths.interactions is not None:
            dataset = load_interactions(paths.interactions, cfg.data.format)
            split = split_per_user(dataset, cfg.data.ratios, stage_seed(cfg.seed, Stage.SPLIT))
        else:
            raise ConfigError("Either paths.interactions or paths.split_dir must be set")
        if paths.text_features is None or paths.vision_features is None:
            raise ConfigError("paths.text_features and paths.vision_features must be set")
        tokens = split.train.item_tokens
        text = align_to_items(load_modal_features(paths.text_features, Modality.TEXT), tokens, split.n_items)
        vision = align_to_items(load_modal_features(paths.vision_features, Modality.VISION), tokens, split.n_items)
    return PreparedData(split=split, text=text, vision=vision)


def with_noise(data: PreparedData, ratio: float, seed: int) -> PreparedData:
    """Inject ``ratio`` oracle noise into train unless the split already carries some."""
    if ratio <= 0.0:
        return data
    with stage("noise"):
        if data.split.train.injected_pairs():
            logger.warning(f"Split already holds {len(data.split.train.injected_pairs())} injected pairs; skipping injection of {ratio}")
            return data
        noisy, report = inject_noise(data.split, ratio, stage_seed(seed, Stage.NOISE))
    return replace(data, split=noisy, noise=report)


def _teacher_trainer(cfg: RunConfig, data: PreparedData, similarity: ModalSimilarity, pool: ChunkedPool) -> DenoisingTrainer:
    split = data.split
    shape = ModelShape(n_users=split.n_users, n_items=split.n_items, d=cfg.model.d, n_layers=cfg.model.n_layers)
    teacher = init_model(ModelKind.TEACHER, shape, stage_seed(cfg.seed, Stage.TEACHER_INIT), train=split.train)
    return DenoisingTrainer(
        teacher,
        split,
        similarity,
        cfg,
        tag="teacher",
        rng=stage_rng(cfg.seed, Stage.TEACHER_TRAIN),
        pool=pool,
        use_dbpr=cfg.train.mode is not Mode.NO_DBPR,
        use_calibration=cfg.train.mode is not Mode.NO_AMSC,
    )


def _student_model(cfg: RunConfig, data: PreparedData) -> Recommender:
    shape = ModelShape(n_users=data.split.n_users, n_items=data.split.n_items, d=cfg.model.d)
    return init_model(ModelKind.STUDENT, shape, stage_seed(cfg.seed, Stage.STUDENT_INIT), text=data.text, vision=data.vision)


def _kd_partitions(cfg: RunConfig, teacher: DenoisingTrainer | None) -> dict[int, UserPartition] | None:
    if teacher is None or cfg.train.mode is Mode.NO_DBPR:
        return None
    return teacher.partitions


def run_guider(cfg: RunConfig, output_dir: str | os.PathLike[str] | None = None, *, data: PreparedData | None = None, noise_ratio: float | None = None) -> RunResult:
    """Run one configuration end to end and write its artifacts.

    Args:
        cfg: Run configuration; ``train.mode`` selects the variant.
        output_dir: Artifact directory, ``cfg.paths.output_dir`` by default.
        data: Already loaded data; loaded from ``cfg.paths`` when omitted.
        noise_ratio: Oracle noise to inject, the first configured ratio by default.

    Returns:
        Metrics, reports and partitions of the run.

    Raises:
        StageError: Any stage failed; the message carries the stage tag.

    """
    out = Path(output_dir if output_dir is not None else cfg.paths.output_dir)
    with stage("setup"):
        out.mkdir(parents=True, exist_ok=True)
        _ = write_json_atomic(out / RESOLVED_CONFIG, cfg.to_flat())
    ratio = cfg.data.noise_ratios[0] if noise_ratio is None else noise_ratio
    data = with_noise(data if data is not None else load_data(cfg), ratio, cfg.seed)
    split = data.split
    if data.noise is not None:
        _ = write_json_atomic(out / "noise_report.json", data.noise.to_dict())

    mode = cfg.train.mode
    result = RunResult(output_dir=out)
    logger.info(f"🚀 Running mode={mode} kd={cfg.train.kd} cost={cfg.train.cost} lambda={cfg.sinkhorn.lam} noise={ratio} seed={cfg.seed}")

    with ChunkedPool(cfg.train.resolved_threads) as pool:
        with stage("hashing"):
            proj = HashProjector(cfg.amsc.hash_bits, data.text.dim, data.vision.dim, seed=stage_seed(cfg.seed, Stage.HASHING), bias=cfg.amsc.hash_bias)
            similarity = ModalSimilarity(proj, data.text, data.vision)

        teacher = _teacher_trainer(cfg, data, similarity, pool) if mode in TEACHER_MODES else None
        student: EpochTrainer | None = None
        student_rng = stage_rng(cfg.seed, Stage.STUDENT_TRAIN)

        if cfg.train.interleaved and teacher is not None and mode is not Mode.TEACHER_ONLY:
            with stage("interleaved"):
                distiller = DistillationTrainer(_student_model(cfg, data), teacher.model, _kd_partitions(cfg, teacher), split, cfg, rng=student_rng, pool=pool)
                while not distiller.stopped:
                    if "teacher" not in result.reports and not teacher.step_epoch():
                        # the student keeps distilling from the restored best teacher
                        result.reports["teacher"] = teacher.finalize()
                    distiller.partitions = _kd_partitions(cfg, teacher)
                    _ = distiller.step_epoch()
                student = distiller
                if "teacher" not in result.reports:
                    result.reports["teacher"] = teacher.finalize()
                result.reports["student"] = student.finalize()
        else:
            if teacher is not None:
                with stage("teacher"):
                    result.reports["teacher"] = teacher.fit()
            if mode is not Mode.TEACHER_ONLY:
                with stage("student"):
                    student_model = _student_model(cfg, data)
                    if mode is Mode.NO_KD:
                        student = DenoisingTrainer(student_model, split, similarity, cfg, tag="student", rng=student_rng, pool=pool)
                    else:
                        kd_teacher = teacher.model if teacher is not None and cfg.train.kd is not KdKind.NONE else None
                        student = DistillationTrainer(student_model, kd_teacher, _kd_partitions(cfg, teacher), split, cfg, rng=student_rng, pool=pool)
                    result.reports["student"] = student.fit()

        with stage("evaluate"):
            trained: list[tuple[str, Recommender]] = []
            if teacher is not None:
                trained.append(("teacher", teacher.model))
            if student is not None:
                trained.append(("student", student.model))
            for tag, model in trained:
                result.metrics.extend(evaluate(model, split, cfg.eval.ks, tag=tag, pool=pool))

    denoiser = teacher if teacher is not None else (student if isinstance(student, DenoisingTrainer) else None)
    if denoiser is not None:
        result.partitions = denoiser.partitions
    with stage("artifacts"):
        _write_artifacts(cfg, out, result, split, teacher, student)
    return result


def _write_artifacts(cfg: RunConfig, out: Path, result: RunResult, split: DataSplit, teacher: EpochTrainer | None, student: EpochTrainer | None) -> None:
    _ = write_metrics_jsonl(out / "metrics.jsonl", result.metrics)
    for trainer in (teacher, student):
        if trainer is None:
            continue
        _ = save_checkpoint(trainer.model, out / f"{trainer.tag}.gmd")
        _ = trainer.report.write(out)
    if result.partitions:
        if cfg.amsc.dump_partitions:
            _ = write_partitions_jsonl(out / "partitions.jsonl", result.partitions)
        injected = split.train.injected_pairs()
        if injected:
            result.noise_detection = noise_detection_report(result.partitions, injected, len(split.train))
            _ = write_json_atomic(out / "noise_detection.json", result.noise_detection.to_dict())
    for row in result.metrics:
        logger.info(f"📈 {row.model} Recall@{row.k} {row.recall:.4f} NDCG@{row.k} {row.ndcg:.4f} ({row.n_users} users)")


def run_experiments(cfg: RunConfig, output_dir: str | os.PathLike[str] | None = None) -> list[RunResult]:
    """Run every (noise ratio, lambda) combination of ``cfg``.

    A single combination writes straight into the output directory. Several
    combinations get one sub-directory each and an aggregated
    ``sweep_metrics.jsonl``.
    """
    out = Path(output_dir if output_dir is not None else cfg.paths.output_dir)
    lambdas = cfg.train.lambdas or (cfg.sinkhorn.lam,)
    combos = [(ratio, lam) for ratio in cfg.data.noise_ratios for lam in lambdas]
    base = load_data(cfg)
    if len(combos) == 1:
        ratio, lam = combos[0]
        return [run_guider(replace(cfg, sinkhorn=replace(cfg.sinkhorn, lam=lam)), out, data=base, noise_ratio=ratio)]

    results: list[RunResult] = []
    rows: list[dict[str, Any]] = []
    for ratio, lam in combos:
        run_cfg = replace(cfg, sinkhorn=replace(cfg.sinkhorn, lam=lam))
        result = run_guider(run_cfg, out / f"noise{ratio:g}_lambda{lam:g}", data=base, noise_ratio=ratio)
        results.append(result)
        rows.extend({"noise_ratio": ratio, "lambda": lam, **row.to_dict()} for row in result.metrics)
    _ = write_jsonl_atomic(out / "sweep_metrics.jsonl", rows)
    logger.info(f"✅ Sweep finished: {len(combos)} runs, {len(rows)} metric rows")
    return results
