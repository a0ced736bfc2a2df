"""Evaluation metrics, confusion matrices, prediction timing and report
rendering (text table, CSV, SVG heatmap).

Conventions: confusion rows are actual classes, columns are predicted;
degenerate 0/0 ratios evaluate to 0.0 and are listed in the report's
``degenerate_flags`` instead of surfacing as NaN, so reports stay
machine-readable. Multiclass precision/recall/F1 are macro-averaged and
the multiclass MCC uses the generalized (Gorodkin) formula.

The mean squared error here is probabilistic (Brier-style): squared
distance between predicted class probabilities and the one-hot truth. For
the binary task only the positive-class column is scored, which is the
classic one-class Brier score.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import LabelOutOfRange, LengthMismatch, NotBinary


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # C x C, rows = actual, cols = predicted
    class_names: List[str]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_lists(self) -> list:
        return self.counts.astype(int).tolist()


def confusion(
    y_true: Sequence[int],
    y_pred: Sequence[int],
    n_classes: int,
    class_names: Optional[List[str]] = None,
) -> ConfusionMatrix:
    yt = np.asarray(y_true, dtype=np.int64)
    yp = np.asarray(y_pred, dtype=np.int64)
    if yt.shape != yp.shape:
        raise LengthMismatch(f"{yt.shape[0]} true labels vs {yp.shape[0]} predicted")
    if yt.size and (yt.min() < 0 or yt.max() >= n_classes
                    or yp.min() < 0 or yp.max() >= n_classes):
        raise LabelOutOfRange(f"labels must lie in [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (yt, yp), 1)
    names = class_names or [str(i) for i in range(n_classes)]
    return ConfusionMatrix(counts=counts, class_names=list(names))


@dataclass
class PerClassMetrics:
    name: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    task: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    mcc: float
    cm: ConfusionMatrix
    mse: Optional[float] = None
    per_class: List[PerClassMetrics] = field(default_factory=list)
    latency_mean_ms: Optional[float] = None
    latency_p95_ms: Optional[float] = None
    degenerate_flags: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "task": self.task,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "mcc": self.mcc,
            "mse": self.mse,
            "confusion": self.cm.to_lists(),
            "class_names": self.cm.class_names,
            "per_class": [vars(p).copy() for p in self.per_class],
            "degenerate_flags": list(self.degenerate_flags),
        }
        if self.latency_mean_ms is not None:
            out["latency_mean_ms"] = self.latency_mean_ms
            out["latency_p95_ms"] = self.latency_p95_ms
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _ratio(num: float, den: float, label: str, flags: List[str]) -> float:
    if den == 0:
        flags.append(f"{label}=0/0")
        return 0.0
    return num / den


def binary_metrics(cm: ConfusionMatrix) -> EvalReport:
    """Accuracy, precision, recall, F1 and MCC of a 2x2 confusion matrix,
    with class 1 as the positive (attack) class."""
    if cm.counts.shape != (2, 2):
        raise NotBinary(f"expected a 2x2 matrix, got {cm.counts.shape}")
    tn, fp = int(cm.counts[0, 0]), int(cm.counts[0, 1])
    fn, tp = int(cm.counts[1, 0]), int(cm.counts[1, 1])
    total = tn + fp + fn + tp
    flags: List[str] = []
    acc = _ratio(tp + tn, total, "accuracy", flags)
    prec = _ratio(tp, tp + fp, "precision", flags)
    rec = _ratio(tp, tp + fn, "recall", flags)
    f1 = _ratio(2 * prec * rec, prec + rec, "f1", flags)
    mcc_den = math.sqrt(float(tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    mcc = _ratio(float(tp) * tn - float(fp) * fn, mcc_den, "mcc", flags)
    per_class = [
        PerClassMetrics(cm.class_names[0],
                        _ratio(tn, tn + fn, "p0", []),
                        _ratio(tn, tn + fp, "r0", []),
                        0.0, tn + fp),
        PerClassMetrics(cm.class_names[1], prec, rec, f1, fn + tp),
    ]
    p0, r0 = per_class[0].precision, per_class[0].recall
    per_class[0].f1 = _ratio(2 * p0 * r0, p0 + r0, "f0", [])
    return EvalReport(
        task="binary", accuracy=acc, precision=prec, recall=rec, f1=f1,
        mcc=mcc, cm=cm, per_class=per_class, degenerate_flags=flags,
    )


def multiclass_metrics(cm: ConfusionMatrix) -> EvalReport:
    """Macro one-vs-rest precision/recall/F1 plus generalized MCC."""
    counts = cm.counts.astype(np.float64)
    c = counts.shape[0]
    total = counts.sum()
    flags: List[str] = []
    acc = _ratio(float(np.trace(counts)), float(total), "accuracy", flags)

    per_class: List[PerClassMetrics] = []
    for k in range(c):
        tp = counts[k, k]
        fp = counts[:, k].sum() - tp
        fn = counts[k, :].sum() - tp
        p = _ratio(tp, tp + fp, f"precision[{cm.class_names[k]}]", flags)
        r = _ratio(tp, tp + fn, f"recall[{cm.class_names[k]}]", flags)
        f1 = _ratio(2 * p * r, p + r, f"f1[{cm.class_names[k]}]", flags)
        per_class.append(PerClassMetrics(
            cm.class_names[k], p, r, f1, int(counts[k, :].sum())))

    macro_p = float(np.mean([p.precision for p in per_class]))
    macro_r = float(np.mean([p.recall for p in per_class]))
    macro_f1 = float(np.mean([p.f1 for p in per_class]))

    # Gorodkin generalization of the Matthews coefficient
    t_k = counts.sum(axis=1)  # actual per class
    p_k = counts.sum(axis=0)  # predicted per class
    cov_xy = float(np.trace(counts)) * total - float(p_k @ t_k)
    cov_xx = total * total - float(p_k @ p_k)
    cov_yy = total * total - float(t_k @ t_k)
    mcc = _ratio(cov_xy, math.sqrt(cov_xx) * math.sqrt(cov_yy), "mcc", flags)

    return EvalReport(
        task="multiclass", accuracy=acc, precision=macro_p, recall=macro_r,
        f1=macro_f1, mcc=mcc, cm=cm, per_class=per_class,
        degenerate_flags=flags,
    )


def mse(y_true: Sequence[int], proba: np.ndarray) -> float:
    """Brier-style probabilistic error.

    Multiclass: mean over samples and classes of (onehot - proba)^2.
    Binary (two columns): positive-class column only.
    """
    yt = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(proba, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != yt.shape[0]:
        raise LengthMismatch("proba must be N x C aligned with y_true")
    sums = p.sum(axis=1)
    if p.size and not np.allclose(sums, 1.0, atol=1e-6):
        raise ValueError("probability rows must sum to 1")
    if p.shape[1] == 2:
        return float(((yt.astype(np.float64) - p[:, 1]) ** 2).mean())
    onehot = np.zeros_like(p)
    onehot[np.arange(len(yt)), yt] = 1.0
    return float(((onehot - p) ** 2).mean())


def time_predictions(model, X: np.ndarray, warmup: int = 10):
    """Per-sample wall-clock latency of single-row predict_proba calls.

    Returns (mean_ms, p95_ms). The first ``warmup`` calls are excluded.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 1:
        raise ValueError("need at least one row to time")
    for i in range(min(warmup, X.shape[0])):
        model.predict_proba(X[i])
    samples = []
    for i in range(X.shape[0]):
        t0 = time.perf_counter()
        model.predict_proba(X[i])
        samples.append((time.perf_counter() - t0) * 1000.0)
    arr = np.asarray(samples)
    return float(arr.mean()), float(np.percentile(arr, 95))


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

_SUMMARY_FIELDS = ("accuracy", "precision", "recall", "f1", "mcc", "mse")


def render_report(report: EvalReport, fmt: str, path) -> None:
    """Write a report file; bytes are deterministic for identical reports.

    fmt is one of text-table, csv, svg-heatmap.
    """
    if fmt == "text-table":
        data = _render_text(report)
    elif fmt == "csv":
        data = _render_csv(report)
    elif fmt == "svg-heatmap":
        data = _render_svg(report.cm)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(data)


def _render_text(report: EvalReport) -> str:
    lines = [f"Task: {report.task}", ""]
    header = f"{'metric':<12}{'value':>12}"
    lines.append(header)
    lines.append("-" * len(header))
    for name in _SUMMARY_FIELDS:
        value = getattr(report, name)
        if value is None:
            continue
        lines.append(f"{name:<12}{value:>12.4f}")
    if report.latency_mean_ms is not None:
        lines.append(f"{'mean_ms':<12}{report.latency_mean_ms:>12.4f}")
        lines.append(f"{'p95_ms':<12}{report.latency_p95_ms:>12.4f}")
    lines.append("")
    lines.append("per-class (precision / recall / f1 / support)")
    for p in report.per_class:
        lines.append(
            f"  {p.name:<10}{p.precision:#.4f} / {p.recall:#.4f} / "
            f"{p.f1:#.4f} / {p.support}"
        )
    lines.append("")
    lines.append("confusion (rows = actual, cols = predicted)")
    width = max(len(n) for n in report.cm.class_names) + 2
    head = " " * width + "".join(f"{n:>{width}}" for n in report.cm.class_names)
    lines.append(head)
    for name, row in zip(report.cm.class_names, report.cm.to_lists()):
        lines.append(f"{name:>{width}}" + "".join(f"{v:>{width}}" for v in row))
    if report.degenerate_flags:
        lines.append("")
        lines.append("degenerate ratios: " + ", ".join(report.degenerate_flags))
    return "\n".join(lines) + "\n"


def _render_csv(report: EvalReport) -> str:
    rows = [["section", "name", "value"]]
    rows.append(["summary", "task", report.task])
    for name in _SUMMARY_FIELDS:
        value = getattr(report, name)
        if value is None:
            continue
        rows.append(["summary", name, repr(float(value))])
    if report.latency_mean_ms is not None:
        rows.append(["summary", "latency_mean_ms", repr(report.latency_mean_ms)])
        rows.append(["summary", "latency_p95_ms", repr(report.latency_p95_ms)])
    for p in report.per_class:
        rows.append(["precision", p.name, repr(float(p.precision))])
        rows.append(["recall", p.name, repr(float(p.recall))])
        rows.append(["f1", p.name, repr(float(p.f1))])
        rows.append(["support", p.name, str(p.support)])
    for i, name_i in enumerate(report.cm.class_names):
        for j, name_j in enumerate(report.cm.class_names):
            rows.append(["confusion", f"{name_i}->{name_j}",
                         str(int(report.cm.counts[i, j]))])
    out = []
    for row in rows:
        out.append(",".join(_csv_quote(v) for v in row))
    return "\r\n".join(out) + "\r\n"


def _csv_quote(value: str) -> str:
    if any(ch in value for ch in ',"\r\n'):
        return '"' + value.replace('"', '""') + '"'
    return value


def _render_svg(cm: ConfusionMatrix) -> str:
    """Standalone SVG heatmap; cell shade and label follow the row share."""
    c = len(cm.class_names)
    cell = 110
    margin = 120
    size_x = margin + c * cell + 20
    size_y = margin + c * cell + 20
    counts = cm.counts
    row_totals = counts.sum(axis=1)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size_x}" '
        f'height="{size_y}" viewBox="0 0 {size_x} {size_y}">',
        '<style>text{font-family:monospace;font-size:13px}</style>',
        f'<text x="{margin}" y="24">confusion matrix '
        '(rows = actual, cols = predicted)</text>',
    ]
    for j, name in enumerate(cm.class_names):
        x = margin + j * cell + cell // 2
        parts.append(f'<text x="{x}" y="{margin - 12}" '
                     f'text-anchor="middle">{name}</text>')
    for i, name in enumerate(cm.class_names):
        y = margin + i * cell + cell // 2
        parts.append(f'<text x="{margin - 10}" y="{y}" '
                     f'text-anchor="end">{name}</text>')
    for i in range(c):
        for j in range(c):
            count = int(counts[i, j])
            share = (count / row_totals[i]) if row_totals[i] else 0.0
            # white -> steel blue ramp on the row share
            r = int(round(255 - share * (255 - 70)))
            g_ = int(round(255 - share * (255 - 130)))
            b = int(round(255 - share * (255 - 180)))
            x = margin + j * cell
            y = margin + i * cell
            text_fill = "#ffffff" if share > 0.6 else "#000000"
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="rgb({r},{g_},{b})" stroke="#444444"/>'
            )
            parts.append(
                f'<text x="{x + cell // 2}" y="{y + cell // 2 - 6}" '
                f'text-anchor="middle" fill="{text_fill}">{count}</text>'
            )
            parts.append(
                f'<text x="{x + cell // 2}" y="{y + cell // 2 + 16}" '
                f'text-anchor="middle" fill="{text_fill}">{share * 100:.1f}%</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def evaluate_predictions(
    y_true: Sequence[int],
    proba: np.ndarray,
    class_names: List[str],
) -> EvalReport:
    """Confusion + task metrics + probabilistic MSE in one step."""
    p = np.asarray(proba, dtype=np.float64)
    y_pred = np.argmax(p, axis=1)
    cm = confusion(y_true, y_pred, p.shape[1], class_names)
    report = binary_metrics(cm) if p.shape[1] == 2 else multiclass_metrics(cm)
    report.mse = mse(y_true, p)
    return report
