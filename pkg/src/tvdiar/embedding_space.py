"""Segment embeddings and the Mahalanobis geometry they are clustered in."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np


class EmbeddingError(ValueError):
    pass


class SingularCovariance(EmbeddingError):
    pass


@dataclass
class EmbeddingSet:
    """Segment ids and their vectors, row-aligned."""

    ids: list
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if len(self.ids) != self.vectors.shape[0]:
            raise EmbeddingError("ids and vectors are not aligned")
        if len(set(self.ids)) != len(self.ids):
            raise EmbeddingError("duplicate segment ids")
        if not np.all(np.isfinite(self.vectors)):
            raise EmbeddingError("embeddings must be finite")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.ids)

    def as_dict(self) -> dict:
        return {i: v for i, v in zip(self.ids, self.vectors)}

    def normalized(self) -> "EmbeddingSet":
        return EmbeddingSet(list(self.ids), unit_normalize(self.vectors))


def unit_normalize(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise EmbeddingError("cannot normalize a zero vector")
    return x / norms


@dataclass(frozen=True)
class WithinClassCovariance:
    matrix: np.ndarray
    epsilon: float = 0.0
    source: str = "training"

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def regularized(self) -> np.ndarray:
        return self.matrix + self.epsilon * np.eye(self.dim)

    def with_epsilon(self, epsilon: float) -> "WithinClassCovariance":
        return WithinClassCovariance(self.matrix, epsilon, self.source)

    @classmethod
    def identity(cls, dim: int) -> "WithinClassCovariance":
        return cls(np.eye(dim), 0.0, "identity")


def default_epsilon(w: np.ndarray) -> float:
    d = w.shape[0]
    return 1e-6 * float(np.trace(w)) / d


def compute_within_class_cov(vectors: np.ndarray, speakers: Sequence, epsilon: Optional[float] = None) -> WithinClassCovariance:
    """Within-speaker scatter of labeled training vectors divided by their count.

    ``epsilon`` defaults to ``1e-6 * trace(W) / d``.
    """
    x = np.atleast_2d(np.asarray(vectors, dtype=float))
    speakers = np.asarray(speakers)
    n = x.shape[0]
    if n == 0:
        raise EmbeddingError("empty training set")
    if speakers.shape[0] != n:
        raise EmbeddingError("one speaker label per training vector is required")
    residuals = np.empty_like(x)
    for spk in np.unique(speakers):
        mask = speakers == spk
        residuals[mask] = x[mask] - x[mask].mean(axis=0)
    w = residuals.T @ residuals / n
    w = 0.5 * (w + w.T)
    if epsilon is None:
        epsilon = default_epsilon(w)
    return WithinClassCovariance(w, float(epsilon))


def _as_matrix(w) -> tuple[np.ndarray, float]:
    if isinstance(w, WithinClassCovariance):
        return w.matrix, w.epsilon
    return np.asarray(w, dtype=float), 0.0


def mahalanobis(a: np.ndarray, b: np.ndarray, w, epsilon: Optional[float] = None) -> float:
    """``sqrt((a-b)^T (W + eps I)^-1 (a-b))``."""
    matrix, eps = _as_matrix(w)
    if epsilon is not None:
        eps = epsilon
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.shape[-1] != matrix.shape[0]:
        raise EmbeddingError("incompatible dimensions")
    diff = a - b
    reg = matrix + eps * np.eye(matrix.shape[0])
    try:
        sol = np.linalg.solve(reg, diff)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance("W + eps*I is singular") from exc
    # solve() can succeed on numerically singular input
    if np.linalg.cond(reg) > 1e14:
        raise SingularCovariance("W + eps*I is singular")
    return float(np.sqrt(max(diff @ sol, 0.0)))


def whitening_matrix(w, epsilon: Optional[float] = None) -> np.ndarray:
    """Symmetric inverse square root of ``W + eps I``."""
    matrix, eps = _as_matrix(w)
    if epsilon is not None:
        eps = epsilon
    matrix = np.asarray(matrix, dtype=float)
    if not np.allclose(matrix, matrix.T, atol=1e-9):
        raise EmbeddingError("W must be symmetric")
    evals, evecs = np.linalg.eigh(matrix)
    scale = max(1.0, float(np.abs(evals).max()))
    if evals.min() < -1e-9 * scale:
        raise EmbeddingError("W is not positive semidefinite")
    evals = np.clip(evals, 0.0, None) + eps
    if evals.min() <= 1e-14 * max(scale, evals.max()):
        raise SingularCovariance("W + eps*I is not positive definite")
    return (evecs / np.sqrt(evals)) @ evecs.T


def whiten(x: np.ndarray, w, epsilon: Optional[float] = None) -> np.ndarray:
    """Map vectors so that Euclidean distance equals the Mahalanobis distance."""
    x = np.asarray(x, dtype=float)
    return x @ whitening_matrix(w, epsilon)


def training_arrays(labeled: Mapping) -> tuple[np.ndarray, list]:
    """``{speaker: [vectors...]}`` to stacked arrays."""
    xs, ys = [], []
    for spk, vecs in labeled.items():
        for v in vecs:
            xs.append(np.asarray(v, dtype=float))
            ys.append(spk)
    return np.vstack(xs), ys
