"""Clean-versus-noisy diagnostics against injected noise."""

import math
import os
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from loguru import logger
from scipy.stats import mannwhitneyu

from ..amsc import ModalSimilarity, run_amsc
from ..artifacts import write_frame_atomic
from ..data.interactions import DatasetError, InteractionDataset
from ..partition import UserPartition
from ..protocols import Recommender
from ..workers import ChunkedPool

__all__ = ["NoiseDetection", "ScoreDistribution", "noise_detection_report", "score_distribution_report", "threshold_sweep"]

HISTOGRAM_BINS = 40


@dataclass(frozen=True, kw_only=True)
class ScoreDistribution:
    """Normalized score histograms of sampled clean and all noisy interactions."""

    histogram: pd.DataFrame
    auc: float
    n_clean: int
    n_noisy: int

    def summary(self) -> dict[str, Any]:
        return {"auc": self.auc, "n_clean": self.n_clean, "n_noisy": self.n_noisy, "bins": HISTOGRAM_BINS}

    def write_csv(self, path: str | os.PathLike[str]) -> Path:
        """CSV with columns ``bin_lo,bin_hi,clean_density,noisy_density``."""
        return write_frame_atomic(path, self.histogram)


@dataclass(frozen=True, kw_only=True)
class NoiseDetection:
    """How well the pooled false sets recover the injected interactions."""

    precision: float
    recall: float
    lift: float
    n_flagged: int
    n_injected: int
    empty: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "lift": self.lift,
            "n_flagged": self.n_flagged,
            "n_injected": self.n_injected,
            "empty": self.empty,
        }


def score_distribution_report(model: Recommender, train: InteractionDataset, *, sample_frac: float = 0.1, seed: int = 0) -> ScoreDistribution:
    """Histogram a random fraction of clean train scores against every injected one.

    The AUC treats the score as a clean-versus-noisy classifier: 1.0 means
    every noisy interaction scores below every clean one.

    Raises:
        DatasetError: The train set carries no injected interactions.

    """
    if not 0.0 < sample_frac <= 1.0:
        raise ValueError(f"sample_frac must lie in (0, 1], got {sample_frac}")
    users, items = train.as_arrays()
    noisy = train.injected_mask()
    if not noisy.any():
        raise DatasetError("Score distributions need injected interactions; run inject-noise first")
    user_repr, item_repr = model.representations()
    scores = np.einsum("bd,bd->b", user_repr[users], item_repr[items])

    clean_idx = np.flatnonzero(~noisy)
    rng = np.random.default_rng(seed)
    n_sample = max(1, math.floor(sample_frac * clean_idx.size + 0.5)) if clean_idx.size else 0
    clean_scores = scores[np.sort(rng.choice(clean_idx, size=n_sample, replace=False))] if n_sample else np.empty(0)
    noisy_scores = scores[noisy]
    if clean_scores.size == 0:
        raise DatasetError("Score distributions need at least one clean interaction")

    lo = float(min(clean_scores.min(), noisy_scores.min()))
    hi = float(max(clean_scores.max(), noisy_scores.max()))
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, HISTOGRAM_BINS + 1)
    clean_density, _ = np.histogram(clean_scores, bins=edges, density=True)
    noisy_density, _ = np.histogram(noisy_scores, bins=edges, density=True)
    auc = float(mannwhitneyu(clean_scores, noisy_scores, alternative="two-sided").statistic) / (clean_scores.size * noisy_scores.size)

    histogram = pd.DataFrame({"bin_lo": edges[:-1], "bin_hi": edges[1:], "clean_density": clean_density, "noisy_density": noisy_density})
    logger.info(f"📊 {model.kind} score separation AUC {auc:.4f} ({clean_scores.size} clean, {noisy_scores.size} noisy)")
    return ScoreDistribution(histogram=histogram, auc=auc, n_clean=int(clean_scores.size), n_noisy=int(noisy_scores.size))


def noise_detection_report(partitions: Mapping[int, UserPartition], injected: Iterable[tuple[int, int]], n_train: int) -> NoiseDetection:
    """Precision, recall and lift of the pooled false sets against the injected pairs.

    Lift compares precision with the injected fraction of the ``n_train`` train
    interactions, the precision of flagging at random.
    """
    injected_set = frozenset(injected)
    flagged = {(p.user, i) for p in partitions.values() for i in p.false_set}
    if not flagged or not injected_set:
        logger.warning(f"⚠️ Noise detection is undefined ({len(flagged)} flagged, {len(injected_set)} injected)")
        return NoiseDetection(precision=0.0, recall=0.0, lift=0.0, n_flagged=len(flagged), n_injected=len(injected_set), empty=True)
    hits = len(flagged & injected_set)
    precision = hits / len(flagged)
    recall = hits / len(injected_set)
    base_rate = len(injected_set) / n_train if n_train else 0.0
    lift = precision / base_rate if base_rate else 0.0
    return NoiseDetection(precision=precision, recall=recall, lift=lift, n_flagged=len(flagged), n_injected=len(injected_set))


def threshold_sweep(
    model: Recommender,
    train: InteractionDataset,
    similarity: ModalSimilarity,
    thresholds: Iterable[float],
    *,
    pool: ChunkedPool | None = None,
) -> list[dict[str, Any]]:
    """Noise-detection quality of the calibrated partitions at each threshold."""
    rows: list[dict[str, Any]] = []
    injected = train.injected_pairs()
    for s_thres in thresholds:
        partitions = run_amsc(model, train, similarity, s_thres, pool=pool)
        report = noise_detection_report(partitions, injected, len(train))
        rows.append({"s_thres": s_thres, **report.to_dict()})
        logger.info(f"S_thres={s_thres}: precision {report.precision:.4f}, recall {report.recall:.4f}, lift {report.lift:.2f}")
    return rows
