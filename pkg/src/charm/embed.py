"""PCA reduction of learned low-level embeddings, silhouette-based cluster
scoring, label-pure window extraction, and CSV export for plotting."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

PURITY_THRESHOLD = 0.9  # fraction of samples that must share the window label


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray                # [D]
    components: np.ndarray          # [k, D], orthonormal rows
    explained_variance: np.ndarray  # [k], descending


@dataclass(frozen=True)
class EmbeddingPoint:
    coords: tuple
    low_label: str
    source: str


def pca_fit(X, k: int) -> PcaModel:
    """Top-k eigenvectors of the sample covariance, descending variance,
    each component's largest-magnitude entry forced positive."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least 2 rows to fit PCA")
    n, d = X.shape
    if not 1 <= k <= min(n, d):
        raise ValueError(f"k={k} out of range for data shape {X.shape}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (n - 1)
    if not np.any(cov):
        raise ValueError("degenerate input: all rows identical (zero covariance)")
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:k]
    components = evecs[:, order].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(mean, components, np.maximum(evals[order], 0.0))


def pca_transform(model: PcaModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[None, :]
    if X.shape[1] != model.mean.shape[0]:
        raise ValueError(
            f"column count {X.shape[1]} != fitted dimension {model.mean.shape[0]}")
    out = (X - model.mean) @ model.components.T
    return out[0] if squeeze else out


def pca_inverse_transform(model: PcaModel, coords) -> np.ndarray:
    return np.asarray(coords, dtype=float) @ model.components + model.mean


def silhouette_score(points, labels) -> float:
    """Mean silhouette with Euclidean distance. Singleton-cluster points and
    zero-spread points contribute 0."""
    X = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    if X.shape[0] != labels.shape[0]:
        raise ValueError("points and labels length differ")
    if X.shape[0] < 3:
        raise ValueError("need at least 3 points")
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise ValueError("need at least 2 distinct labels")
    diff = X[:, None, :] - X[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    scores = np.zeros(X.shape[0])
    members = {lab: np.nonzero(labels == lab)[0] for lab in uniq}
    for i in range(X.shape[0]):
        own = members[labels[i]]
        if own.size <= 1:
            continue  # singleton cluster contributes 0
        a = dist[i, own].sum() / (own.size - 1)
        b = min(dist[i, members[lab]].mean() for lab in uniq if lab != labels[i])
        denom = max(a, b)
        scores[i] = (b - a) / denom if denom > 0 else 0.0
    return float(scores.mean())


def label_pure_windows(data, track, r: int, null_token: str = "null",
                       purity: float = PURITY_THRESHOLD):
    """Non-overlapping r-sample windows whose dominant low-level label covers
    at least `purity` of the window. Returns (windows [k, r, q], labels)."""
    data = np.asarray(data, dtype=float)
    track = list(track)
    if len(track) != data.shape[0]:
        raise ValueError("label track length != sample count")
    windows = []
    labels = []
    for start in range(0, data.shape[0] - r + 1, r):
        chunk = track[start:start + r]
        best, count = max(((lab, chunk.count(lab)) for lab in set(chunk)),
                          key=lambda kv: kv[1])
        if best == null_token or count < purity * r:
            continue
        windows.append(data[start:start + r])
        labels.append(best)
    if windows:
        return np.stack(windows), labels
    return np.empty((0, r, data.shape[1])), labels


def export_embedding(points, path, delimiter: str = ","):
    """CSV rows pc1, pc2, low_label, source with a header; full float
    precision; labels containing the delimiter are quoted."""
    points = list(points)
    if not points:
        raise ValueError("nothing to export")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, quoting=csv.QUOTE_MINIMAL)
        writer.writerow(["pc1", "pc2", "low_label", "source"])
        for p in points:
            writer.writerow([repr(float(p.coords[0])), repr(float(p.coords[1])),
                             p.low_label, p.source])
