"""Tests for per-user splitting and noise injection."""

from pathlib import Path

import pytest

from guider.data import DataSplit, DatasetError, InteractionDataset, inject_noise, load_split, save_split, split_per_user


class TestSplitPerUser:
    """Test cases for split_per_user."""

    def test_parts_partition_each_user(self, corpus) -> None:
        """Test every interaction lands in exactly one part."""
        split = split_per_user(corpus.dataset, (8, 1, 1), seed=1)
        assert split.all_pairs() == corpus.dataset.pairs()
        assert len(split.train) + len(split.valid) + len(split.test) == len(corpus.dataset)
        assert not split.train.pairs() & split.test.pairs()
        assert not split.valid.pairs() & split.test.pairs()

    def test_counts_per_user(self, split: DataSplit) -> None:
        """Test eight items split 6/1/1 under 8:1:1 weights."""
        for user in range(split.n_users):
            assert (len(split.train.items_of(user)), len(split.valid.items_of(user)), len(split.test.items_of(user))) == (6, 1, 1)

    def test_small_users_stay_in_train(self) -> None:
        """Test users with fewer than three interactions are not held out."""
        ds = InteractionDataset.from_pairs(2, 10, [(0, 0), (0, 1), (1, 2), (1, 3), (1, 4)])
        split = split_per_user(ds, (8, 1, 1), seed=0)
        assert set(split.train.items_of(0)) == {0, 1}
        assert not split.valid.items_of(0)
        assert len(split.valid.items_of(1)) == 1
        assert len(split.test.items_of(1)) == 1

    def test_seeded_and_deterministic(self, corpus) -> None:
        """Test equal seeds give equal splits and different seeds differ."""
        a = split_per_user(corpus.dataset, seed=3)
        b = split_per_user(corpus.dataset, seed=3)
        c = split_per_user(corpus.dataset, seed=4)
        assert a.test.pairs() == b.test.pairs()
        assert a.test.pairs() != c.test.pairs()

    @pytest.mark.parametrize("ratios", [(8, 1), (0, 0, 0), (8, -1, 1)])
    def test_bad_ratios(self, corpus, ratios: tuple[int, ...]) -> None:
        """Test malformed ratio triples are rejected."""
        with pytest.raises(DatasetError, match="ratios"):
            _ = split_per_user(corpus.dataset, ratios)

    def test_exclusions(self, split: DataSplit) -> None:
        """Test valid ranking hides train and test ranking hides train and valid."""
        user = 0
        assert split.exclusions("valid")[user] == frozenset(split.train.items_of(user))
        assert split.exclusions("test")[user] == frozenset(split.train.items_of(user)) | frozenset(split.valid.items_of(user))


class TestInjectNoise:
    """Test cases for inject_noise."""

    def test_injects_unobserved_pairs(self, split: DataSplit) -> None:
        """Test injected pairs are new, flagged and sized by the ratio."""
        noisy, report = inject_noise(split, 0.1, seed=3)
        injected = noisy.train.injected_pairs()
        assert len(injected) == round(0.1 * len(split.train)) == len(report.injected_pairs)
        assert not injected & split.all_pairs()
        assert split.train.pairs() <= noisy.train.pairs()
        assert noisy.valid is split.valid
        assert noisy.test is split.test

    def test_zero_ratio_is_identity(self, split: DataSplit) -> None:
        """Test a zero ratio returns the split unchanged."""
        noisy, report = inject_noise(split, 0.0, seed=3)
        assert noisy is split
        assert report.injected_pairs == ()

    @pytest.mark.parametrize("ratio", [-0.1, 0.6])
    def test_ratio_range(self, split: DataSplit, ratio: float) -> None:
        """Test ratios outside [0, 0.5] are rejected."""
        with pytest.raises(DatasetError, match="Noise ratio"):
            _ = inject_noise(split, ratio, seed=0)

    def test_too_few_free_pairs(self) -> None:
        """Test an almost-full interaction matrix cannot absorb the request."""
        ds = InteractionDataset.from_pairs(2, 4, [(0, 0), (0, 1), (0, 2), (0, 3), (1, 0), (1, 1), (1, 2)])
        split = split_per_user(ds, (1, 0, 0), seed=0)
        with pytest.raises(DatasetError, match="Cannot inject"):
            _ = inject_noise(split, 0.5, seed=0)

    def test_dense_fallback_path(self) -> None:
        """Test enumeration is used when free pairs are scarce."""
        ds = InteractionDataset.from_pairs(2, 5, [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)])
        split = split_per_user(ds, (1, 0, 0), seed=0)
        noisy, report = inject_noise(split, 0.5, seed=0)
        assert len(report.injected_pairs) == 3
        assert set(report.injected_pairs) <= {(0, 3), (0, 4), (1, 3), (1, 4)}
        assert noisy.train.injected_pairs() == frozenset(report.injected_pairs)

    def test_report_dict(self, split: DataSplit) -> None:
        """Test the report lists every injected pair."""
        _, report = inject_noise(split, 0.05, seed=8)
        payload = report.to_dict()
        assert payload["n_injected"] == len(payload["injected_pairs"])
        assert payload["seed"] == 8


class TestSplitPersistence:
    """Test cases for save_split and load_split."""

    def test_round_trip_keeps_injected_flags(self, noisy_split: DataSplit, tmp_path: Path) -> None:
        """Test a saved noisy split reloads with identical parts and flags."""
        _ = save_split(noisy_split, tmp_path / "split")
        loaded = load_split(tmp_path / "split")
        assert loaded.train.pairs() == noisy_split.train.pairs()
        assert loaded.valid.pairs() == noisy_split.valid.pairs()
        assert loaded.test.pairs() == noisy_split.test.pairs()
        assert loaded.train.injected_pairs() == noisy_split.train.injected_pairs()
        assert (loaded.n_users, loaded.n_items, loaded.seed) == (noisy_split.n_users, noisy_split.n_items, noisy_split.seed)

    def test_files_written(self, split: DataSplit, tmp_path: Path) -> None:
        """Test the split directory layout."""
        _, report = inject_noise(split, 0.1, seed=1)
        target = save_split(split, tmp_path / "s", report)
        for name in ("train.tsv", "valid.tsv", "test.tsv", "injected.tsv", "split_manifest.json", "noise_report.json"):
            assert (target / name).exists()

    def test_missing_manifest(self, tmp_path: Path) -> None:
        """Test loading a directory without a manifest fails."""
        with pytest.raises(DatasetError, match="manifest"):
            _ = load_split(tmp_path)
