"""Synthetic minority oversampling (SMOTE) for the training split.

Each minority class is raised to the majority count by interpolating
between a class member and one of its k nearest same-class neighbors:

    x_new = x_i + u * (x_nn - x_i),  u ~ Uniform(0, 1)

Neighbor distances are Euclidean over z-score standardized copies of the
features (standardization fitted on the given matrix, which is always the
training split), so megabyte-scale columns do not drown fraction-valued
ones. The interpolation itself runs in raw feature space; because
standardization is affine, the chosen segment is the same either way.

Original rows pass through bitwise unchanged and come first in the output.
Applying the resampler to an already balanced dataset is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import ClassTooSmall, NonFiniteFeature


@dataclass
class SmoteConfig:
    k_neighbors: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")


def _nearest_same_class(Z: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest neighbors (within Z) of every row of Z,
    excluding the row itself. Exact O(n^2) distances; ties break by index."""
    n = Z.shape[0]
    sq = (Z * Z).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.T)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k]


def smote(
    X: np.ndarray, y: np.ndarray, cfg: SmoteConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """Oversample every minority class up to the majority count.

    Deterministic given cfg.seed; per-class generators are derived as
    default_rng([seed, class_value]) so classes are independent streams.
    Raises ClassTooSmall for any minority class with fewer than 2 samples
    and NonFiniteFeature for NaN/Inf inputs. k is clamped to class_count-1
    when a minority class is smaller than k+1.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be N x D with matching y")
    if not np.isfinite(X).all():
        raise NonFiniteFeature("X contains NaN or Inf")

    classes, counts = np.unique(y, return_counts=True)
    majority = int(counts.max())

    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd == 0.0, 1.0, sd)

    new_rows = []
    new_labels = []
    for cls, count in zip(classes.tolist(), counts.tolist()):
        need = majority - count
        if need == 0:
            continue
        if count < 2:
            raise ClassTooSmall(cls, count)
        members = np.flatnonzero(y == cls)
        P = X[members]
        Z = (P - mu) / sd
        k = min(cfg.k_neighbors, count - 1)
        nn = _nearest_same_class(Z, k)
        rng = np.random.default_rng([cfg.seed, int(cls)])
        base = rng.integers(0, count, size=need)
        pick = rng.integers(0, k, size=need)
        u = rng.random(size=need)
        for b, j, t in zip(base.tolist(), pick.tolist(), u.tolist()):
            x_i = P[b]
            x_nn = P[nn[b, j]]
            new_rows.append(x_i + t * (x_nn - x_i))
            new_labels.append(cls)

    if not new_rows:
        return X.copy(), y.copy()
    X_out = np.vstack([X, np.array(new_rows)])
    y_out = np.concatenate([y, np.array(new_labels, dtype=np.int64)])
    return X_out, y_out
