"""Tests for the teacher and student recommenders."""

import numpy as np
import pytest

from guider.data import InteractionDataset, ModalFeatureTable, Modality
from guider.models import ModelKind, ModelShape, StudentModel, TeacherModel, assert_finite, build_normalized_adjacency, init_model, score, score_all, student_item_repr, xavier_uniform
from tests.base_test import BaseTestCase


def dense_adjacency(train: InteractionDataset) -> np.ndarray:
    """Normalized bipartite adjacency built densely, one edge at a time."""
    n = train.n_users + train.n_items
    a = np.zeros((n, n))
    for x in train.interactions:
        a[x.user, train.n_users + x.item] = 1.0
        a[train.n_users + x.item, x.user] = 1.0
    degree = a.sum(axis=1)
    inv = np.where(degree > 0, 1.0 / np.sqrt(np.where(degree > 0, degree, 1.0)), 0.0)
    return inv[:, None] * a * inv[None, :]


class TestXavier(BaseTestCase):
    """Test cases for xavier_uniform."""

    def test_bounds(self) -> None:
        """Test samples lie inside the Xavier bound."""
        w = xavier_uniform(self.rng, 30, 10)
        assert w.shape == (30, 10)
        assert np.abs(w).max() <= np.sqrt(6.0 / 40)

    def test_rejects_empty(self) -> None:
        """Test zero dimensions are rejected."""
        with pytest.raises(ValueError):
            _ = xavier_uniform(self.rng, 0, 3)


class TestTeacherModel(BaseTestCase):
    """Test cases for TeacherModel."""

    def test_adjacency_matches_dense(self, split) -> None:
        """Test the sparse normalized adjacency equals a dense construction."""
        users, items = split.train.as_arrays()
        sparse = build_normalized_adjacency(split.n_users, split.n_items, users, items)
        np.testing.assert_allclose(sparse.toarray(), dense_adjacency(split.train), atol=1e-12)

    @pytest.mark.parametrize("n_layers", [1, 2, 3])
    def test_propagation_matches_matrix_powers(self, split, n_layers: int) -> None:
        """Test effective embeddings equal the mean of dense adjacency powers."""
        model = init_model(ModelKind.TEACHER, ModelShape(n_users=split.n_users, n_items=split.n_items, d=4, n_layers=n_layers), seed=0, train=split.train)
        a = dense_adjacency(split.train)
        x = np.vstack([model.params["user_emb"], model.params["item_emb"]])
        expected = sum(np.linalg.matrix_power(a, k) @ x for k in range(n_layers + 1)) / (n_layers + 1)
        users, items = model.representations()
        np.testing.assert_allclose(np.vstack([users, items]), expected, atol=1e-12)

    def test_zero_layers_is_factorization(self) -> None:
        """Test a zero-layer teacher scores with its raw tables."""
        model = TeacherModel(np.array([[1.0, 2.0]]), np.array([[3.0, 4.0], [0.5, -1.0]]), n_layers=0)
        assert score(model, 0, 0) == 11.0
        np.testing.assert_array_equal(score_all(model, 0), [11.0, -1.5])

    def test_backward_is_adjoint(self, split) -> None:
        """Test backward is the transpose of the forward map."""
        model = init_model(ModelKind.TEACHER, ModelShape(n_users=split.n_users, n_items=split.n_items, d=3, n_layers=2), seed=1, train=split.train)
        assert isinstance(model, TeacherModel)
        x = self.rng.standard_normal((split.n_users + split.n_items, 3))
        y = self.rng.standard_normal((split.n_users + split.n_items, 3))
        pulled = model.backward(y[: split.n_users], y[split.n_users :])
        lhs = float(np.sum(model.smooth(x) * y))
        rhs = float(np.sum(x[: split.n_users] * pulled["user_emb"]) + np.sum(x[split.n_users :] * pulled["item_emb"]))
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_cache_invalidation(self) -> None:
        """Test representations refresh only after invalidate."""
        model = TeacherModel(np.ones((1, 2)), np.ones((1, 2)), n_layers=0)
        assert score(model, 0, 0) == 2.0
        model.params["user_emb"][0, 0] = 3.0
        model.invalidate()
        assert score(model, 0, 0) == 4.0

    def test_requires_adjacency_for_layers(self) -> None:
        """Test a propagated teacher needs an adjacency of matching size."""
        with pytest.raises(ValueError, match="adjacency"):
            _ = TeacherModel(np.ones((2, 2)), np.ones((2, 2)), n_layers=1)
        with pytest.raises(ValueError, match="train"):
            _ = init_model(ModelKind.TEACHER, ModelShape(n_users=2, n_items=2, n_layers=1), seed=0)

    @pytest.mark.parametrize(("u", "i"), [(5, 0), (0, 9), (-1, 0)])
    def test_score_index_errors(self, u: int, i: int) -> None:
        """Test out-of-range indices raise IndexError."""
        model = TeacherModel(np.ones((2, 2)), np.ones((3, 2)), n_layers=0)
        with pytest.raises(IndexError):
            _ = score(model, u, i)

    def test_assert_finite(self) -> None:
        """Test non-finite parameters are detected."""
        model = TeacherModel(np.ones((1, 2)), np.ones((1, 2)), n_layers=0)
        assert_finite(model)
        model.params["item_emb"][0, 1] = np.inf
        with pytest.raises(FloatingPointError, match="item_emb"):
            assert_finite(model)


class TestStudentModel(BaseTestCase):
    """Test cases for StudentModel."""

    def test_item_repr_is_additive_fusion(self, student: StudentModel) -> None:
        """Test the fused item vector matches the batched representations."""
        _, items = student.representations()
        p = student.params
        expected = p["item_id_emb"][3] + p["proj_text"] @ student.text.matrix[3] + p["proj_vision"] @ student.vision.matrix[3]
        np.testing.assert_allclose(items[3], expected)
        np.testing.assert_allclose(student_item_repr(student, 3, student.text, student.vision), expected)

    def test_item_repr_uses_given_features(self, student: StudentModel) -> None:
        """Test swapping feature tables changes the fused vector."""
        other = ModalFeatureTable(modality=Modality.TEXT, matrix=student.text.matrix * 2.0)
        assert not np.allclose(student_item_repr(student, 0, other, student.vision), student_item_repr(student, 0, student.text, student.vision))

    def test_item_repr_index_errors(self, student: StudentModel) -> None:
        """Test missing items and feature rows raise IndexError."""
        with pytest.raises(IndexError):
            _ = student_item_repr(student, student.n_items, student.text, student.vision)
        short = ModalFeatureTable(modality=Modality.TEXT, matrix=student.text.matrix[:2])
        with pytest.raises(IndexError, match="feature row"):
            _ = student_item_repr(student, 5, short, student.vision)

    def test_backward_projection_gradients(self, student: StudentModel) -> None:
        """Test projection gradients are the feature-weighted item gradients."""
        grad_items = self.rng.standard_normal((student.n_items, student.d))
        grads = student.backward(np.zeros((student.n_users, student.d)), grad_items)
        np.testing.assert_allclose(grads["proj_text"], grad_items.T @ student.text.matrix)
        assert grads["proj_vision"].shape == student.params["proj_vision"].shape

    def test_feature_shape_checks(self, corpus) -> None:
        """Test projections must match the feature widths."""
        with pytest.raises(ValueError, match="feature dims"):
            _ = StudentModel(np.ones((2, 3)), np.ones((40, 3)), np.ones((3, 99)), np.ones((3, corpus.vision.dim)), text=corpus.text, vision=corpus.vision)

    def test_init_requires_features(self) -> None:
        """Test a student cannot be built without both feature tables."""
        with pytest.raises(ValueError, match="features"):
            _ = init_model("student", ModelShape(n_users=2, n_items=2), seed=0)

    def test_init_is_seeded(self, corpus) -> None:
        """Test equal seeds give equal parameters."""
        shape = ModelShape(n_users=3, n_items=corpus.text.n_items, d=4)
        a = init_model("student", shape, seed=5, text=corpus.text, vision=corpus.vision)
        b = init_model("student", shape, seed=5, text=corpus.text, vision=corpus.vision)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name], b.params[name])
