"""Ranking metrics and noise diagnostics."""

from .diagnostics import NoiseDetection, ScoreDistribution, noise_detection_report, score_distribution_report, threshold_sweep
from .metrics import MetricsRow, evaluate, ndcg_at_k, per_user_metrics, rank_items, rank_scores, recall_at_k, write_metrics_jsonl

__all__ = [
    "MetricsRow",
    "NoiseDetection",
    "ScoreDistribution",
    "evaluate",
    "ndcg_at_k",
    "noise_detection_report",
    "per_user_metrics",
    "rank_items",
    "rank_scores",
    "recall_at_k",
    "score_distribution_report",
    "threshold_sweep",
    "write_metrics_jsonl",
]
