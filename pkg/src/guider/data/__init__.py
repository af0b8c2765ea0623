"""Interaction data, splits, noise injection and modal features."""

from .features import FeatureError, ModalFeatureTable, Modality, align_to_items, load_modal_features, save_modal_features
from .interactions import DatasetError, Interaction, InteractionDataset, load_interactions
from .split import DataSplit, NoiseReport, inject_noise, load_split, save_split, split_per_user
from .synthetic import SyntheticCorpus, generate_synthetic, save_corpus

__all__ = [
    "DataSplit",
    "DatasetError",
    "FeatureError",
    "Interaction",
    "InteractionDataset",
    "ModalFeatureTable",
    "Modality",
    "NoiseReport",
    "SyntheticCorpus",
    "align_to_items",
    "generate_synthetic",
    "inject_noise",
    "load_interactions",
    "load_modal_features",
    "load_split",
    "save_corpus",
    "save_modal_features",
    "save_split",
    "split_per_user",
]
