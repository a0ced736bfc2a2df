"""Second-order gradient-boosted decision trees.

Greedy exact split search (no histogram approximation): every midpoint
between consecutive distinct sorted feature values is a candidate, scored by

    gain = 1/2 * [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)] - gamma

with leaf weights w = -soft_threshold(G, alpha) / (H + lambda). Binary
training uses the logistic objective (g = p - y, h = p(1-p), base score =
prevalence logit); multiclass trains one tree per class per round against
the softmax objective with zero base scores.

Training is deterministic given (X, y, hyperparams): row and column
subsamples come from one seeded generator consumed in tree order, and gain
ties break toward the lowest feature index, then the lowest threshold.
Models serialize to a versioned JSON artifact that round-trips predictions
bitwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import List, Optional, Tuple, Union

import numpy as np

from .errors import (
    CorruptArtifact,
    DimensionMismatch,
    EmptyInput,
    InvalidConfig,
    ManifestMismatch,
    NonFiniteFeature,
    SingleClassInput,
    UnsupportedVersion,
)

FORMAT_VERSION = 1

OBJECTIVE_BINARY = "binary-logistic"
OBJECTIVE_SOFTMAX = "softmax"


@dataclass
class Hyperparams:
    n_estimators: int = 300
    max_depth: int = 3
    learning_rate: float = 0.1
    subsample: float = 1.0
    colsample_bytree: float = 1.0
    reg_alpha: float = 0.0
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_estimators < 0:
            raise InvalidConfig("n_estimators must be >= 0")
        if self.max_depth < 1:
            raise InvalidConfig("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise InvalidConfig("learning_rate must be in (0, 1]")
        if not 0.0 < self.subsample <= 1.0:
            raise InvalidConfig("subsample must be in (0, 1]")
        if not 0.0 < self.colsample_bytree <= 1.0:
            raise InvalidConfig("colsample_bytree must be in (0, 1]")
        if self.reg_alpha < 0 or self.reg_lambda < 0 or self.gamma < 0:
            raise InvalidConfig("regularization terms must be >= 0")
        if self.min_child_weight < 0:
            raise InvalidConfig("min_child_weight must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "Hyperparams":
        return cls(**obj)


#: RSCV-selected configuration used for the allow/flag (binary) task.
BINARY_DEFAULTS = Hyperparams(
    n_estimators=300, max_depth=3, learning_rate=0.01,
    subsample=0.9, colsample_bytree=0.9, reg_alpha=0.0, reg_lambda=0.8,
)

#: RSCV-selected configuration used for attack-type attribution (4 classes).
MULTICLASS_DEFAULTS = Hyperparams(
    n_estimators=500, max_depth=4, learning_rate=0.05,
    subsample=1.0, colsample_bytree=1.0, reg_alpha=0.3, reg_lambda=1.2,
)


def soft_threshold(g: float, alpha: float) -> float:
    return math.copysign(max(abs(g) - alpha, 0.0), g)


def leaf_weight(g_sum: float, h_sum: float, alpha: float, lam: float) -> float:
    return -soft_threshold(g_sum, alpha) / (h_sum + lam)


@dataclass
class Leaf:
    weight: float

    def to_dict(self) -> dict:
        return {"weight": self.weight}


@dataclass
class Split:
    feature: int
    threshold: float
    default_left: bool
    left: Union["Split", Leaf]
    right: Union["Split", Leaf]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "default_left": self.default_left,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }


def _node_from_dict(obj: dict):
    if "weight" in obj:
        return Leaf(weight=float(obj["weight"]))
    return Split(
        feature=int(obj["feature"]),
        threshold=float(obj["threshold"]),
        default_left=bool(obj["default_left"]),
        left=_node_from_dict(obj["left"]),
        right=_node_from_dict(obj["right"]),
    )


def tree_depth(node) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


def count_splits(node) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + count_splits(node.left) + count_splits(node.right)


def _apply_tree(node, X: np.ndarray) -> np.ndarray:
    """Vectorized raw leaf weights of one tree for every row of X."""
    out = np.empty(X.shape[0], dtype=np.float64)
    _apply_into(node, X, np.arange(X.shape[0]), out)
    return out


def _apply_into(node, X, idx, out) -> None:
    if isinstance(node, Leaf):
        out[idx] = node.weight
        return
    col = X[idx, node.feature]
    nan = np.isnan(col)
    go_left = col < node.threshold
    if nan.any():
        go_left = np.where(nan, node.default_left, go_left)
    _apply_into(node.left, X, idx[go_left], out)
    _apply_into(node.right, X, idx[~go_left], out)


@dataclass
class GbtModel:
    objective: str
    n_classes: int
    class_names: List[str]
    n_features: int
    base_scores: List[float]
    trees: List[Tuple[int, Union[Split, Leaf]]]  # (class index, root)
    hyperparams: Hyperparams
    manifest_hash: str = ""
    metadata: dict = field(default_factory=dict)

    # -- scoring -----------------------------------------------------------

    def _check_input(self, X: np.ndarray, manifest_hash: Optional[str]) -> None:
        if manifest_hash is not None and self.manifest_hash \
                and manifest_hash != self.manifest_hash:
            raise ManifestMismatch(
                f"model was trained on schema {self.manifest_hash[:12]}..., "
                f"got {manifest_hash[:12]}..."
            )
        if X.shape[-1] != self.n_features:
            raise DimensionMismatch(
                f"expected {self.n_features} features, got {X.shape[-1]}"
            )

    def margins(self, X: np.ndarray) -> np.ndarray:
        """Raw additive scores: (N,) for binary, (N, C) for softmax."""
        eta = self.hyperparams.learning_rate
        if self.objective == OBJECTIVE_BINARY:
            out = np.full(X.shape[0], self.base_scores[0], dtype=np.float64)
            for _, root in self.trees:
                out += eta * _apply_tree(root, X)
            return out
        out = np.tile(np.asarray(self.base_scores, dtype=np.float64),
                      (X.shape[0], 1))
        for k, root in self.trees:
            out[:, k] += eta * _apply_tree(root, X)
        return out

    def predict_proba(self, X, manifest_hash: Optional[str] = None) -> np.ndarray:
        """Class probabilities; accepts one vector or a matrix."""
        arr = np.asarray(X, dtype=np.float64)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        self._check_input(arr, manifest_hash)
        m = self.margins(arr)
        if self.objective == OBJECTIVE_BINARY:
            p1 = _sigmoid(m)
            proba = np.stack([1.0 - p1, p1], axis=1)
        else:
            proba = _softmax(m)
        return proba[0] if single else proba

    def predict(self, X, manifest_hash: Optional[str] = None) -> np.ndarray:
        """Argmax class; ties break toward the lower class index, so the
        binary decision threshold sits at probability 0.5."""
        proba = self.predict_proba(X, manifest_hash)
        if proba.ndim == 1:
            return int(np.argmax(proba))
        return np.argmax(proba, axis=1)

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "objective": self.objective,
            "n_classes": self.n_classes,
            "class_names": self.class_names,
            "n_features": self.n_features,
            "base_scores": list(self.base_scores),
            "manifest_hash": self.manifest_hash,
            "hyperparams": self.hyperparams.to_dict(),
            "metadata": self.metadata,
            "trees": [{"class": k, "root": root.to_dict()} for k, root in self.trees],
        }


def save(model: GbtModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load(path) -> GbtModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptArtifact(f"unreadable model artifact: {exc}") from None
    if not isinstance(obj, dict) or "format_version" not in obj:
        raise CorruptArtifact("model artifact missing format_version")
    if obj["format_version"] != FORMAT_VERSION:
        raise UnsupportedVersion(
            f"artifact format {obj['format_version']}, supported {FORMAT_VERSION}"
        )
    try:
        return GbtModel(
            objective=obj["objective"],
            n_classes=int(obj["n_classes"]),
            class_names=list(obj["class_names"]),
            n_features=int(obj["n_features"]),
            base_scores=[float(b) for b in obj["base_scores"]],
            trees=[(int(t["class"]), _node_from_dict(t["root"]))
                   for t in obj["trees"]],
            hyperparams=Hyperparams.from_dict(obj["hyperparams"]),
            manifest_hash=obj.get("manifest_hash", ""),
            metadata=obj.get("metadata", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptArtifact(f"malformed model artifact: {exc}") from None


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _sigmoid(m: np.ndarray) -> np.ndarray:
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    em = np.exp(m[~pos])
    out[~pos] = em / (1.0 + em)
    return out


def _softmax(m: np.ndarray) -> np.ndarray:
    z = m - m.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _find_split(sv, sg, sh, g_sum, h_sum, hp: Hyperparams):
    """Best (gain, threshold) over one feature's pre-sorted node values.

    Candidates are midpoints between consecutive distinct sorted values;
    within a feature, ties take the lowest threshold.
    """
    boundaries = np.flatnonzero(sv[:-1] < sv[1:])
    if boundaries.size == 0:
        return None
    cg = np.cumsum(sg)
    ch = np.cumsum(sh)
    gl = cg[boundaries]
    hl = ch[boundaries]
    gr = g_sum - gl
    hr = h_sum - hl
    lam = hp.reg_lambda
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam)
                      - g_sum * g_sum / (h_sum + lam)) - hp.gamma
    valid = (hl >= hp.min_child_weight) & (hr >= hp.min_child_weight) \
        & np.isfinite(gain)
    if not valid.any():
        return None
    gain = np.where(valid, gain, -np.inf)
    best = int(np.argmax(gain))
    b = boundaries[best]
    return float(gain[best]), (sv[b] + sv[b + 1]) / 2.0


def _grow(X, g, h, sort_idx, mask, n_rows, cols, depth, hp: Hyperparams):
    """Greedy node builder over a boolean row mask.

    sort_idx holds one global stable argsort per feature, computed once per
    fit; filtering it by the node mask yields each node's rows in sorted
    order without re-sorting.
    """
    g_sum = float(g[mask].sum())
    h_sum = float(h[mask].sum())
    if depth >= hp.max_depth or n_rows < 2:
        return Leaf(leaf_weight(g_sum, h_sum, hp.reg_alpha, hp.reg_lambda))

    best = None  # (gain, feature, threshold)
    for f in cols:
        order = sort_idx[f]
        node_sorted = order[mask[order]]
        found = _find_split(X[node_sorted, f], g[node_sorted], h[node_sorted],
                            g_sum, h_sum, hp)
        if found is None:
            continue
        gain, threshold = found
        if best is None or gain > best[0]:
            best = (gain, int(f), threshold)

    if best is None or best[0] <= 0.0:
        return Leaf(leaf_weight(g_sum, h_sum, hp.reg_alpha, hp.reg_lambda))
    _, feature, threshold = best
    left_mask = mask & (X[:, feature] < threshold)
    right_mask = mask & ~left_mask
    n_left = int(left_mask.sum())
    return Split(
        feature=feature,
        threshold=threshold,
        default_left=True,
        left=_grow(X, g, h, sort_idx, left_mask, n_left, cols, depth + 1, hp),
        right=_grow(X, g, h, sort_idx, right_mask, n_rows - n_left, cols,
                    depth + 1, hp),
    )


def _grow_tree(X, g, h, sort_idx, rows, cols, hp: Hyperparams):
    mask = np.zeros(X.shape[0], dtype=bool)
    mask[rows] = True
    return _grow(X, g, h, sort_idx, mask, rows.size, cols, 0, hp)


def _sample(rng, n: int, fraction: float) -> np.ndarray:
    if fraction >= 1.0:
        return np.arange(n)
    m = max(1, int(round(fraction * n)))
    return np.sort(rng.choice(n, size=m, replace=False))


def _binary_log_loss(y: np.ndarray, margins: np.ndarray) -> float:
    p = np.clip(_sigmoid(margins), 1e-15, 1 - 1e-15)
    return float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean())


def fit(
    X: np.ndarray,
    y: np.ndarray,
    hp: Hyperparams,
    objective: str = OBJECTIVE_BINARY,
    class_names: Optional[List[str]] = None,
    manifest_hash: str = "",
    loss_history: Optional[list] = None,
) -> GbtModel:
    """Train a boosted ensemble. Deterministic given (X, y, hp).

    For the softmax objective, y must be dense class indices 0..C-1 and one
    tree per class is grown each round. ``loss_history``, when given,
    receives the training log-loss after every round.
    """
    hp.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyInput("X must be a non-empty N x D matrix")
    if not np.isfinite(X).all():
        raise NonFiniteFeature("X contains NaN or Inf")
    if len(y) != X.shape[0]:
        raise InvalidConfig("X and y lengths differ")
    classes = np.unique(y)
    if classes.size < 2:
        raise SingleClassInput("training labels contain a single class")

    n, d = X.shape
    rng = np.random.default_rng(hp.seed)
    randomized = hp.subsample < 1.0 or hp.colsample_bytree < 1.0
    sort_idx = [np.argsort(X[:, f], kind="stable") for f in range(d)]

    if objective == OBJECTIVE_BINARY:
        if not set(classes.tolist()) <= {0, 1}:
            raise InvalidConfig("binary objective expects labels in {0,1}")
        yf = y.astype(np.float64)
        prevalence = float(yf.mean())
        base = math.log(prevalence / (1.0 - prevalence))
        margins = np.full(n, base, dtype=np.float64)
        trees: List[Tuple[int, Union[Split, Leaf]]] = []
        for _ in range(hp.n_estimators):
            p = _sigmoid(margins)
            g = p - yf
            h = p * (1.0 - p)
            rows = _sample(rng, n, hp.subsample) if randomized else np.arange(n)
            cols = _sample(rng, d, hp.colsample_bytree) if randomized else np.arange(d)
            root = _grow(X, g, h, rows, cols, 0, hp)
            margins += hp.learning_rate * _apply_tree(root, X)
            trees.append((0, root))
            if loss_history is not None:
                loss_history.append(_binary_log_loss(yf, margins))
        names = class_names or ["0", "1"]
        return GbtModel(
            objective=OBJECTIVE_BINARY, n_classes=2, class_names=list(names),
            n_features=d, base_scores=[base], trees=trees, hyperparams=hp,
            manifest_hash=manifest_hash,
        )

    if objective != OBJECTIVE_SOFTMAX:
        raise InvalidConfig(f"unknown objective {objective!r}")
    n_classes = int(classes.max()) + 1
    if set(classes.tolist()) - set(range(n_classes)):
        raise InvalidConfig("softmax labels must be dense 0..C-1 indices")
    onehot = np.zeros((n, n_classes), dtype=np.float64)
    onehot[np.arange(n), y.astype(int)] = 1.0
    margins2 = np.zeros((n, n_classes), dtype=np.float64)
    trees = []
    for _ in range(hp.n_estimators):
        proba = _softmax(margins2)
        for k in range(n_classes):
            g = proba[:, k] - onehot[:, k]
            h = proba[:, k] * (1.0 - proba[:, k])
            rows = _sample(rng, n, hp.subsample) if randomized else np.arange(n)
            cols = _sample(rng, d, hp.colsample_bytree) if randomized else np.arange(d)
            root = _grow(X, g, h, rows, cols, 0, hp)
            margins2[:, k] += hp.learning_rate * _apply_tree(root, X)
            trees.append((k, root))
        if loss_history is not None:
            p = np.clip(_softmax(margins2), 1e-15, 1.0)
            ll = -np.log(p[np.arange(n), y.astype(int)]).mean()
            loss_history.append(float(ll))
    names = class_names or [str(c) for c in range(n_classes)]
    return GbtModel(
        objective=OBJECTIVE_SOFTMAX, n_classes=n_classes, class_names=list(names),
        n_features=d, base_scores=[0.0] * n_classes, trees=trees, hyperparams=hp,
        manifest_hash=manifest_hash,
    )
