"""Sentiment-regression evaluation: Acc7, two Acc2/F1 variants, MAE, Pearson r."""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields

import numpy as np


class MetricError(ValueError):
    pass


def _pair(pred, labels) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if pred.shape != labels.shape:
        raise MetricError(f"length mismatch: {pred.size} predictions, {labels.size} labels")
    if pred.size == 0:
        raise MetricError("metrics need at least one sample")
    return pred, labels


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def seven_class(x, lo: float = -3.0, hi: float = 3.0, equal_intervals: bool = False) -> np.ndarray:
    """Class index 0..6 of each score.

    Default: clamp then round to the nearest integer. ``equal_intervals``
    instead cuts [lo, hi] into seven bins of equal width.
    """
    x = np.clip(np.asarray(x, dtype=np.float64), lo, hi)
    if equal_intervals:
        width = (hi - lo) / 7.0
        return np.minimum(np.floor((x - lo) / width), 6).astype(int)
    return (round_half_away(x) - round_half_away(lo)).astype(int)


def acc7(pred, labels, equal_intervals: bool = False) -> float:
    pred, labels = _pair(pred, labels)
    hits = seven_class(pred, equal_intervals=equal_intervals) == seven_class(
        labels, equal_intervals=equal_intervals
    )
    return 100.0 * float(np.mean(hits))


def weighted_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Support-weighted mean of per-class F1 over the classes present in y_true."""
    classes, support = np.unique(y_true, return_counts=True)
    total = 0.0
    for c, n in zip(classes, support):
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        denom = 2 * tp + fp + fn
        total += n * (2 * tp / denom if denom else 0.0)
    return float(total / support.sum())


def acc2_f1(pred, labels, mode: str = "include_zero") -> tuple[float, float]:
    """Binary accuracy and weighted F1 (both in percent).

    ``include_zero``: negative (< 0) vs non-negative (>= 0) over all samples.
    ``exclude_zero``: samples labelled exactly 0 are dropped first; the rest
    split into negative (< 0) vs positive.
    """
    pred, labels = _pair(pred, labels)
    if mode == "exclude_zero":
        keep = labels != 0
        if not np.any(keep):
            raise MetricError("exclude_zero left no samples")
        pred, labels = pred[keep], labels[keep]
    elif mode != "include_zero":
        raise MetricError(f"unknown Acc2 mode {mode!r}")
    y_true = labels >= 0
    y_pred = pred >= 0
    return 100.0 * float(np.mean(y_true == y_pred)), 100.0 * weighted_f1(y_true, y_pred)


def mae(pred, labels) -> float:
    pred, labels = _pair(pred, labels)
    return float(np.mean(np.abs(pred - labels)))


def corr(pred, labels) -> float:
    """Pearson correlation; undefined (MetricError) when either side is constant."""
    pred, labels = _pair(pred, labels)
    dp = pred - pred.mean()
    dl = labels - labels.mean()
    sp, sl = np.sqrt(np.sum(dp**2)), np.sqrt(np.sum(dl**2))
    if sp == 0.0 or sl == 0.0:
        raise MetricError("correlation undefined for a constant vector")
    return float(np.clip(np.sum(dp * dl) / (sp * sl), -1.0, 1.0))


@dataclass
class MetricsReport:
    acc7: float
    acc2_nonneg: float
    f1_nonneg: float
    acc2_pos: float
    f1_pos: float
    mae: float
    corr: float
    n_total: int
    n_nonzero: int

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list:
        return list(astuple(self))

    def csv_row(self) -> str:
        return ",".join(_fmt(v) for v in self.row())


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def evaluate(pred, labels, equal_intervals: bool = False) -> MetricsReport:
    pred, labels = _pair(pred, labels)
    a_nn, f_nn = acc2_f1(pred, labels, "include_zero")
    nonzero = int(np.sum(labels != 0))
    a_pos, f_pos = acc2_f1(pred, labels, "exclude_zero") if nonzero else (float("nan"),) * 2
    try:
        r = corr(pred, labels)
    except MetricError:
        r = float("nan")
    return MetricsReport(
        acc7=acc7(pred, labels, equal_intervals),
        acc2_nonneg=a_nn,
        f1_nonneg=f_nn,
        acc2_pos=a_pos,
        f1_pos=f_pos,
        mae=mae(pred, labels),
        corr=r,
        n_total=int(labels.size),
        n_nonzero=nonzero,
    )
