import dataclasses

import pytest

from guider.amsc import HashProjector, ModalSimilarity
from guider.config import ModelConfig, RunConfig, SinkhornConfig, SynthConfig, TrainConfig
from guider.data import DataSplit, SyntheticCorpus, generate_synthetic, inject_noise, split_per_user
from guider.models import ModelKind, ModelShape, StudentModel, TeacherModel, init_model

SMALL_SYNTH = SynthConfig(n_users=60, n_items=40, n_clusters=4, interactions_per_user=8, text_dim=6, vision_dim=6, modal_noise=0.05, inconsistent_frac=0.1)


@pytest.fixture
def config() -> RunConfig:
    """
    Returns a small, fast, immutable RunConfig.

    Since RunConfig is a frozen dataclass, tests that need to override specific
    values must create a new config object using `dataclasses.replace()`.

    Example:
        new_config = dataclasses.replace(config, train=dataclasses.replace(config.train, kd=KdKind.KL))
    """
    return RunConfig(
        seed=11,
        model=ModelConfig(d=8, n_layers=1),
        sinkhorn=SinkhornConfig(lam=0.1, max_iter=500, tol=1e-9),
        train=TrainConfig(lr=1e-3, weight_decay=1e-3, batch_size=64, kd_batch_size=32, warmup_epochs=1, patience=2, max_epochs=3, threads=1),
        synth=SMALL_SYNTH,
    )


@pytest.fixture
def corpus() -> SyntheticCorpus:
    """A 60-user, 40-item planted-cluster corpus."""
    return generate_synthetic(SMALL_SYNTH, seed=7)


@pytest.fixture
def split(corpus: SyntheticCorpus) -> DataSplit:
    """Clean 8/1/1 split of the corpus."""
    return split_per_user(corpus.dataset, (8, 1, 1), seed=1)


@pytest.fixture
def noisy_split(split: DataSplit) -> DataSplit:
    """The split with 10% injected train noise."""
    noisy, _ = inject_noise(split, 0.1, seed=3)
    return noisy


@pytest.fixture
def similarity(corpus: SyntheticCorpus) -> ModalSimilarity:
    """Hash-calibrated modal similarity over the corpus features."""
    proj = HashProjector(16, corpus.text.dim, corpus.vision.dim, seed=5)
    return ModalSimilarity(proj, corpus.text, corpus.vision)


@pytest.fixture
def teacher(noisy_split: DataSplit) -> TeacherModel:
    """One-layer propagated teacher over the noisy train set."""
    model = init_model(ModelKind.TEACHER, ModelShape(n_users=noisy_split.n_users, n_items=noisy_split.n_items, d=8, n_layers=1), seed=2, train=noisy_split.train)
    assert isinstance(model, TeacherModel)
    return model


@pytest.fixture
def student(noisy_split: DataSplit, corpus: SyntheticCorpus) -> StudentModel:
    """Student over the corpus features."""
    model = init_model(ModelKind.STUDENT, ModelShape(n_users=noisy_split.n_users, n_items=noisy_split.n_items, d=8), seed=4, text=corpus.text, vision=corpus.vision)
    assert isinstance(model, StudentModel)
    return model


@pytest.fixture
def fast_config(config: RunConfig) -> RunConfig:
    """``config`` with a two-epoch schedule for pipeline tests."""
    return dataclasses.replace(config, train=dataclasses.replace(config.train, max_epochs=2, warmup_epochs=1))
