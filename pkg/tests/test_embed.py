import csv

import numpy as np
import pytest

from charm.embed import (EmbeddingPoint, export_embedding, label_pure_windows,
                         pca_fit, pca_inverse_transform, pca_transform,
                         silhouette_score)
from charm.neurocore import make_rng


class TestPcaFit:
    def test_line_closed_form(self):
        t = np.linspace(-3, 3, 40)
        X = np.column_stack([t, 2 * t])
        model = pca_fit(X, 2)
        np.testing.assert_allclose(model.components[0],
                                   np.array([1.0, 2.0]) / np.sqrt(5), atol=1e-12)
        assert model.explained_variance[1] == pytest.approx(0.0, abs=1e-12)

    def test_full_rank_reconstruction(self):
        X = make_rng(0).normal(size=(30, 5))
        model = pca_fit(X, 5)
        back = pca_inverse_transform(model, pca_transform(model, X))
        np.testing.assert_allclose(back, X, atol=1e-9)

    def test_rotation_invariant_variances(self):
        rng = make_rng(1)
        X = rng.normal(size=(100, 3)) * np.array([3.0, 1.5, 0.5])
        theta = 0.7
        R = np.array([[np.cos(theta), -np.sin(theta), 0],
                      [np.sin(theta), np.cos(theta), 0],
                      [0, 0, 1.0]])
        a = pca_fit(X, 3).explained_variance
        b = pca_fit(X @ R.T, 3).explained_variance
        np.testing.assert_allclose(a, b, rtol=1e-9)

    def test_components_orthonormal_sorted(self):
        X = make_rng(2).normal(size=(50, 6))
        model = pca_fit(X, 4)
        np.testing.assert_allclose(model.components @ model.components.T,
                                   np.eye(4), atol=1e-9)
        assert np.all(np.diff(model.explained_variance) <= 1e-12)

    def test_sign_convention(self):
        X = make_rng(3).normal(size=(40, 4))
        for row in pca_fit(X, 3).components:
            assert row[np.argmax(np.abs(row))] > 0

    def test_k_out_of_range(self):
        X = make_rng(4).normal(size=(5, 3))
        with pytest.raises(ValueError):
            pca_fit(X, 4)

    def test_degenerate_identical_rows(self):
        with pytest.raises(ValueError):
            pca_fit(np.ones((10, 3)), 2)


class TestPcaTransform:
    def test_mean_maps_to_origin(self):
        X = make_rng(5).normal(size=(20, 4))
        model = pca_fit(X, 2)
        np.testing.assert_allclose(pca_transform(model, model.mean), 0.0, atol=1e-12)

    def test_transformed_variance_matches(self):
        X = make_rng(6).normal(size=(80, 5))
        model = pca_fit(X, 3)
        T = pca_transform(model, X)
        np.testing.assert_allclose(T.var(axis=0, ddof=1),
                                   model.explained_variance, atol=1e-9)
        np.testing.assert_allclose(T.mean(axis=0), 0.0, atol=1e-9)

    def test_unit_step_along_component(self):
        X = make_rng(7).normal(size=(25, 4))
        model = pca_fit(X, 2)
        coords = pca_transform(model, model.mean + model.components[0])
        np.testing.assert_allclose(coords, [1.0, 0.0], atol=1e-9)

    def test_shape_mismatch(self):
        model = pca_fit(make_rng(8).normal(size=(10, 3)), 2)
        with pytest.raises(ValueError):
            pca_transform(model, np.zeros((4, 5)))


class TestSilhouette:
    def test_well_separated_clusters(self):
        rng = make_rng(9)
        a = rng.normal(scale=0.05, size=(30, 2))
        b = rng.normal(scale=0.05, size=(30, 2)) + 100.0
        score = silhouette_score(np.vstack([a, b]), ["a"] * 30 + ["b"] * 30)
        assert score > 0.9

    def test_random_labels_near_zero(self):
        scores = []
        for seed in range(5):
            rng = make_rng(seed)
            X = rng.normal(size=(60, 2))
            labels = rng.integers(0, 2, size=60)
            scores.append(silhouette_score(X, labels))
        assert abs(np.mean(scores)) < 0.1

    def test_identical_points_defined_zero(self):
        X = np.zeros((6, 2))
        assert silhouette_score(X, ["a", "a", "a", "b", "b", "b"]) == 0.0

    def test_single_label_rejected(self):
        with pytest.raises(ValueError):
            silhouette_score(np.zeros((5, 2)), ["a"] * 5)

    def test_rigid_motion_invariant(self):
        rng = make_rng(10)
        X = rng.normal(size=(40, 2))
        labels = rng.integers(0, 3, size=40)
        theta = 1.1
        R = np.array([[np.cos(theta), -np.sin(theta)],
                      [np.sin(theta), np.cos(theta)]])
        moved = X @ R.T + np.array([5.0, -3.0])
        assert silhouette_score(moved, labels) == pytest.approx(
            silhouette_score(X, labels), abs=1e-9)

    def test_singleton_cluster_contributes_zero(self):
        X = np.array([[0.0, 0], [0.1, 0], [50.0, 0]])
        score = silhouette_score(X, ["a", "a", "b"])
        # the two 'a' points dominate; singleton 'b' adds 0
        assert 0.6 < score < 0.67


class TestLabelPureWindows:
    def test_pure_runs_extracted(self):
        data = np.arange(64, dtype=float).reshape(32, 2)
        track = ["x"] * 16 + ["y"] * 16
        windows, labels = label_pure_windows(data, track, 16)
        assert labels == ["x", "y"]
        np.testing.assert_array_equal(windows[0], data[:16])

    def test_purity_threshold(self):
        data = np.zeros((32, 1))
        track = ["x"] * 14 + ["y"] * 2 + ["y"] * 16  # first window 87.5% pure
        windows, labels = label_pure_windows(data, track, 16, purity=0.9)
        assert labels == ["y"]

    def test_ninety_percent_accepted(self):
        data = np.zeros((20, 1))
        track = ["x"] * 18 + ["y"] * 2
        _, labels = label_pure_windows(data, track, 20, purity=0.9)
        assert labels == ["x"]

    def test_null_windows_skipped(self):
        data = np.zeros((16, 1))
        _, labels = label_pure_windows(data, ["null"] * 16, 16)
        assert labels == []

    def test_non_overlapping(self):
        data = np.zeros((40, 1))
        windows, labels = label_pure_windows(data, ["x"] * 40, 16)
        assert len(labels) == 2  # offsets 0 and 16; trailing 8 ignored


class TestExport:
    def points(self, n=3, label="walk"):
        return [EmbeddingPoint((float(i), -float(i)), label, f"seg{i}")
                for i in range(n)]

    def test_line_count(self, tmp_path):
        path = tmp_path / "emb.csv"
        export_embedding(self.points(3), path)
        assert len(path.read_text().strip().splitlines()) == 4

    def test_round_trip_exact(self, tmp_path):
        path = tmp_path / "emb.csv"
        pts = [EmbeddingPoint((0.1234567890123456, -7.77e-12), "sip", "s0"),
               EmbeddingPoint((1.0 / 3.0, 2.0 / 7.0), "stir", "s1")]
        export_embedding(pts, path)
        with open(path) as fh:
            rows = list(csv.reader(fh))[1:]
        for row, p in zip(rows, pts):
            assert float(row[0]) == p.coords[0]
            assert float(row[1]) == p.coords[1]

    def test_delimiter_in_label_quoted(self, tmp_path):
        path = tmp_path / "emb.csv"
        export_embedding([EmbeddingPoint((1.0, 2.0), "a,b", "s")], path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[1][2] == "a,b"
        assert '"a,b"' in path.read_text()

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            export_embedding([], tmp_path / "emb.csv")
