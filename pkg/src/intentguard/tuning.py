"""Randomized hyperparameter search with stratified cross-validation.

Configurations are sampled i.i.d. from per-parameter distributions and
scored by mean validation log-loss across stratified folds; the winner is
the loss minimizer with ties broken by earlier trial index. Inside every
fold the oversampler is fitted on the training portion only, so validation
rows never leak into synthetic-sample generation.

Everything derives from one master seed: trial t draws its parameters from
default_rng([seed, t]) and the fold-f oversampler seed comes from
SeedSequence([seed, t, f]), making serial and parallel execution produce
identical logs.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, fields as dataclass_fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import gbt
from .errors import InsufficientClassMembers, InvalidSpace
from .metrics import confusion, multiclass_metrics
from .resample import SmoteConfig, smote

_DIST_KINDS = ("choice", "uniform", "log_uniform", "int_uniform")
_TUNABLE = {f.name for f in dataclass_fields(gbt.Hyperparams)} - {"seed"}


def default_search_space() -> Dict[str, dict]:
    """Brackets wide enough that both shipped default configurations are
    interior points."""
    return {
        "n_estimators": {"int_uniform": [100, 600]},
        "max_depth": {"int_uniform": [2, 6]},
        "learning_rate": {"log_uniform": [0.005, 0.3]},
        "subsample": {"uniform": [0.7, 1.0]},
        "colsample_bytree": {"uniform": [0.7, 1.0]},
        "reg_alpha": {"uniform": [0.0, 0.5]},
        "reg_lambda": {"uniform": [0.5, 2.0]},
        "gamma": {"uniform": [0.0, 0.3]},
    }


def validate_space(space: Dict[str, dict]) -> None:
    if not space:
        raise InvalidSpace("empty search space")
    for name, desc in space.items():
        if name not in _TUNABLE:
            raise InvalidSpace(f"unknown hyperparameter {name!r}")
        if not isinstance(desc, dict) or len(desc) != 1:
            raise InvalidSpace(f"{name}: descriptor must have exactly one kind")
        kind, arg = next(iter(desc.items()))
        if kind not in _DIST_KINDS:
            raise InvalidSpace(f"{name}: unknown distribution {kind!r}")
        if kind == "choice":
            if not isinstance(arg, (list, tuple)) or not arg:
                raise InvalidSpace(f"{name}: choice list must be non-empty")
        else:
            if (not isinstance(arg, (list, tuple)) or len(arg) != 2
                    or not arg[0] <= arg[1]):
                raise InvalidSpace(f"{name}: need [lo, hi] with lo <= hi")
            if kind == "log_uniform" and arg[0] <= 0:
                raise InvalidSpace(f"{name}: log_uniform needs lo > 0")


def sample_params(space: Dict[str, dict], rng: np.random.Generator) -> gbt.Hyperparams:
    """One configuration; parameters are drawn in sorted-name order."""
    hp = gbt.Hyperparams()
    for name in sorted(space):
        kind, arg = next(iter(space[name].items()))
        if kind == "choice":
            value = arg[int(rng.integers(0, len(arg)))]
        elif kind == "uniform":
            value = float(rng.uniform(arg[0], arg[1]))
        elif kind == "log_uniform":
            value = float(math.exp(rng.uniform(math.log(arg[0]),
                                               math.log(arg[1]))))
        else:  # int_uniform
            value = int(rng.integers(arg[0], arg[1] + 1))
        setattr(hp, name, value)
    return hp


def stratified_kfold(
    y: Sequence[int], n_folds: int, seed: int
) -> List[np.ndarray]:
    """Validation index arrays; per-class counts differ by <= 1 across folds.

    Raises InsufficientClassMembers when any class has fewer members than
    folds.
    """
    if n_folds < 2:
        raise InvalidSpace("n_folds must be >= 2")
    y = np.asarray([int(v) for v in y], dtype=np.int64)
    rng = np.random.default_rng(seed)
    folds: List[list] = [[] for _ in range(n_folds)]
    for cls in sorted(set(y.tolist())):
        idx = np.flatnonzero(y == cls)
        if idx.size < n_folds:
            raise InsufficientClassMembers(
                f"class {cls} has {idx.size} members for {n_folds} folds"
            )
        perm = rng.permutation(idx)
        for f in range(n_folds):
            folds[f].extend(perm[f::n_folds].tolist())
    return [np.sort(np.array(f, dtype=np.int64)) for f in folds]


@dataclass
class TrialResult:
    index: int
    params: gbt.Hyperparams
    fold_losses: List[float]
    mean_loss: float
    mean_macro_f1: float
    wall_time_s: float

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "params": self.params.to_dict(),
            "fold_losses": self.fold_losses,
            "mean_loss": self.mean_loss,
            "mean_macro_f1": self.mean_macro_f1,
            "wall_time_s": self.wall_time_s,
        }


@dataclass
class RscvResult:
    best_params: gbt.Hyperparams
    best_index: int
    trials: List[TrialResult]
    folds: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)


def _log_loss(y: np.ndarray, proba: np.ndarray) -> float:
    p = np.clip(proba, 1e-15, 1.0)
    return float(-np.log(p[np.arange(len(y)), y]).mean())


def rscv(
    X: np.ndarray,
    y: Sequence[int],
    space: Dict[str, dict],
    n_iter: int,
    n_folds: int,
    objective: str,
    seed: int,
    smote_cfg: Optional[SmoteConfig] = None,
    collapse_binary: Optional[bool] = None,
) -> RscvResult:
    """Randomized search over ``space`` with stratified n-fold CV.

    Folds stratify on the labels as given (keep them 4-class even for the
    binary task so attack folds stay populated); when the objective is
    binary the labels are collapsed to attack-vs-benign after fold
    assignment. Validation loss is multiclass log-loss; macro-F1 is logged
    alongside for reporting.
    """
    if n_iter < 1:
        raise InvalidSpace("n_iter must be >= 1")
    validate_space(space)
    X = np.asarray(X, dtype=np.float64)
    y_arr = np.asarray([int(v) for v in y], dtype=np.int64)
    if collapse_binary is None:
        collapse_binary = objective == gbt.OBJECTIVE_BINARY
    y_model = (y_arr > 0).astype(np.int64) if collapse_binary else y_arr
    base_smote = smote_cfg or SmoteConfig()

    val_folds = stratified_kfold(y_arr, n_folds, seed)
    all_idx = np.arange(len(y_arr))
    folds = []
    for val_idx in val_folds:
        mask = np.ones(len(y_arr), dtype=bool)
        mask[val_idx] = False
        train_idx = all_idx[mask]
        assert not np.intersect1d(train_idx, val_idx).size
        folds.append((train_idx, val_idx))

    trials: List[TrialResult] = []
    best: Optional[TrialResult] = None
    for t in range(n_iter):
        rng_t = np.random.default_rng([seed, t])
        hp = sample_params(space, rng_t)
        hp.seed = int(rng_t.integers(0, 2**31))
        t0 = time.perf_counter()
        losses, f1s = [], []
        for f, (train_idx, val_idx) in enumerate(folds):
            fold_seed = int(np.random.SeedSequence([seed, t, f]).generate_state(1)[0])
            Xs, ys = smote(
                X[train_idx], y_model[train_idx],
                SmoteConfig(k_neighbors=base_smote.k_neighbors, seed=fold_seed),
            )
            model = gbt.fit(Xs, ys, hp, objective)
            proba = model.predict_proba(X[val_idx])
            y_val = y_model[val_idx]
            losses.append(_log_loss(y_val, proba))
            cm = confusion(y_val, np.argmax(proba, axis=1), model.n_classes)
            f1s.append(multiclass_metrics(cm).f1)
        trial = TrialResult(
            index=t,
            params=hp,
            fold_losses=losses,
            mean_loss=float(np.mean(losses)),
            mean_macro_f1=float(np.mean(f1s)),
            wall_time_s=time.perf_counter() - t0,
        )
        trials.append(trial)
        if best is None or trial.mean_loss < best.mean_loss:
            best = trial

    return RscvResult(
        best_params=best.params, best_index=best.index,
        trials=trials, folds=folds,
    )


def save_trials_jsonl(trials: List[TrialResult], path,
                      meta: Optional[dict] = None) -> None:
    from .dataset import ARTIFACT_META_KEY

    with open(path, "w", encoding="utf-8") as fh:
        if meta is not None:
            fh.write(json.dumps({ARTIFACT_META_KEY: meta}, sort_keys=True) + "\n")
        for trial in trials:
            fh.write(json.dumps(trial.to_dict(), sort_keys=True) + "\n")
