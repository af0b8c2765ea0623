"""Planted-cluster synthetic corpora with aligned text and vision features."""

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from ..artifacts import write_frame_atomic, write_json_atomic
from ..config import SynthConfig
from ..protocols import IntArray
from .features import ModalFeatureTable, Modality, save_modal_features
from .interactions import DatasetError, InteractionDataset

__all__ = ["SyntheticCorpus", "generate_synthetic", "save_corpus"]


@dataclass(frozen=True, kw_only=True)
class SyntheticCorpus:
    """Generated interactions, feature tables and ground truth."""

    dataset: InteractionDataset
    text: ModalFeatureTable
    vision: ModalFeatureTable
    cluster_labels: IntArray
    preferred_clusters: tuple[tuple[int, ...], ...]
    inconsistent_items: tuple[int, ...]


def _validate(cfg: SynthConfig) -> None:
    problems = [
        (cfg.n_users <= 0 or cfg.n_items <= 0, "n_users and n_items must be positive"),
        (not 0 < cfg.n_clusters <= cfg.n_items, f"n_clusters must lie in [1, n_items], got {cfg.n_clusters}"),
        (cfg.interactions_per_user <= 0, "interactions_per_user must be positive"),
        (cfg.interactions_per_user > cfg.n_items, f"interactions_per_user ({cfg.interactions_per_user}) exceeds n_items ({cfg.n_items})"),
        (not 1 <= cfg.max_clusters_per_user <= cfg.n_clusters, f"max_clusters_per_user must lie in [1, n_clusters], got {cfg.max_clusters_per_user}"),
        (cfg.text_dim <= 0 or cfg.vision_dim <= 0, "feature dimensions must be positive"),
        (cfg.modal_noise < 0, f"modal_noise must be non-negative, got {cfg.modal_noise}"),
        (not 0.0 <= cfg.inconsistent_frac <= 1.0, f"inconsistent_frac must lie in [0, 1], got {cfg.inconsistent_frac}"),
    ]
    for failed, message in problems:
        if failed:
            raise DatasetError(f"Inconsistent synthetic config: {message}")


def generate_synthetic(cfg: SynthConfig, seed: int) -> SyntheticCorpus:
    """Generate a corpus whose preference structure is visible in modal content.

    Items are split evenly over clusters. Each user prefers 1 to
    ``max_clusters_per_user`` clusters and interacts only with items from them.
    Both modalities derive from one centroid per cluster drawn over a shared
    coordinate frame, plus Gaussian noise of scale ``modal_noise``. A fraction
    ``inconsistent_frac`` of items takes its vision centroid from a different
    cluster, which makes those items cross-modally inconsistent.

    Args:
        cfg: Generator settings.
        seed: Root seed; equal seeds give identical corpora.

    Returns:
        The corpus with ground-truth labels.

    """
    _validate(cfg)
    rng = np.random.default_rng(seed)

    labels = rng.permutation(np.arange(cfg.n_items, dtype=np.int64) % cfg.n_clusters)
    members = [np.flatnonzero(labels == c) for c in range(cfg.n_clusters)]

    preferred: list[tuple[int, ...]] = []
    pairs: list[tuple[int, int]] = []
    for user in range(cfg.n_users):
        n_pref = int(rng.integers(1, cfg.max_clusters_per_user + 1))
        clusters = tuple(sorted(int(c) for c in rng.choice(cfg.n_clusters, size=n_pref, replace=False)))
        pool = np.sort(np.concatenate([members[c] for c in clusters]))
        k = min(cfg.interactions_per_user, pool.size)
        chosen = rng.choice(pool, size=k, replace=False)
        preferred.append(clusters)
        pairs.extend((user, int(i)) for i in chosen)

    shared_dim = max(cfg.text_dim, cfg.vision_dim)
    centroids = rng.standard_normal((cfg.n_clusters, shared_dim))
    vision_labels = labels.copy()
    n_inconsistent = int(round(cfg.inconsistent_frac * cfg.n_items))
    inconsistent = np.sort(rng.choice(cfg.n_items, size=n_inconsistent, replace=False)) if n_inconsistent else np.empty(0, dtype=np.int64)
    if cfg.n_clusters > 1:
        for item in inconsistent:
            shift = int(rng.integers(1, cfg.n_clusters))
            vision_labels[item] = (labels[item] + shift) % cfg.n_clusters

    text = centroids[labels][:, : cfg.text_dim] + cfg.modal_noise * rng.standard_normal((cfg.n_items, cfg.text_dim))
    vision = centroids[vision_labels][:, : cfg.vision_dim] + cfg.modal_noise * rng.standard_normal((cfg.n_items, cfg.vision_dim))

    dataset = InteractionDataset.from_pairs(cfg.n_users, cfg.n_items, pairs)
    logger.info(f"Generated synthetic corpus: {cfg.n_users} users, {cfg.n_items} items, {cfg.n_clusters} clusters, {len(dataset)} interactions (seed={seed})")
    return SyntheticCorpus(
        dataset=dataset,
        text=ModalFeatureTable(modality=Modality.TEXT, matrix=text),
        vision=ModalFeatureTable(modality=Modality.VISION, matrix=vision),
        cluster_labels=labels,
        preferred_clusters=tuple(preferred),
        inconsistent_items=tuple(int(i) for i in inconsistent),
    )


def save_corpus(corpus: SyntheticCorpus, directory: str | os.PathLike[str]) -> dict[str, Path]:
    """Write ``interactions.tsv``, ``text.gmf``, ``vision.gmf`` and ``ground_truth.json``.

    Interaction tokens are the generator's indices, so feature row ``i``
    belongs to item token ``i``.
    """
    target = Path(directory)
    users, items = corpus.dataset.as_arrays()
    labels = corpus.cluster_labels.tolist()
    ground_truth = {
        "n_users": corpus.dataset.n_users,
        "n_items": corpus.dataset.n_items,
        "cluster_labels": labels,
        "items_per_cluster": [labels.count(c) for c in range(max(labels) + 1)],
        "preferred_clusters": [list(c) for c in corpus.preferred_clusters],
        "inconsistent_items": list(corpus.inconsistent_items),
    }
    return {
        "interactions": write_frame_atomic(target / "interactions.tsv", pd.DataFrame({"user": users, "item": items}), sep="\t", header=False),
        "text": save_modal_features(corpus.text, target / "text.gmf"),
        "vision": save_modal_features(corpus.vision, target / "vision.gmf"),
        "ground_truth": write_json_atomic(target / "ground_truth.json", ground_truth),
    }
