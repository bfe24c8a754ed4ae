"""AUC, EER, F1 and accuracy with anomaly as the positive class, plus sweeps."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreRecord:
    sample_id: str
    score: float
    true_label: int | None = None


@dataclass
class MetricsReport:
    auc: float
    eer: float
    f1: float
    acc: float
    n_pos: int
    n_neg: int
    tau_used: float

    def to_dict(self) -> dict:
        return asdict(self)


def _unpack(scores, labels=None) -> tuple[np.ndarray, np.ndarray]:
    if labels is None:
        recs = list(scores)
        if any(r.true_label is None for r in recs):
            raise ValueError("all records need a true label")
        # deterministic order: score descending, ties by sample_id
        recs.sort(key=lambda r: (-r.score, r.sample_id))
        scores = [r.score for r in recs]
        labels = [r.true_label for r in recs]
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(int)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 (normal) or 1 (anomalous)")
    return s, y


def _require_both(y: np.ndarray) -> tuple[int, int]:
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("metric needs both normal and anomalous samples")
    return n_pos, n_neg


def _average_ranks(s: np.ndarray) -> np.ndarray:
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    boundaries = np.flatnonzero(np.diff(sorted_s)) + 1
    starts = np.r_[0, boundaries]
    ends = np.r_[boundaries, len(s)]
    ranks = np.empty(len(s))
    # 1-based ranks; tied blocks share their mean rank
    for a, b in zip(starts, ends):
        ranks[order[a:b]] = (a + b + 1) / 2.0
    return ranks


def auc(scores, labels=None) -> float:
    """Mann-Whitney AUC: P(anomalous score > normal score), ties count one half.

    Accepts either ``(scores, labels)`` arrays or a sequence of ScoreRecords.
    """
    s, y = _unpack(scores, labels)
    n_pos, n_neg = _require_both(y)
    ranks = _average_ranks(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_points(scores, labels=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(thresholds, fpr, fnr) for the rule ``score >= threshold`` -> anomaly.

    The first point uses threshold +inf (nothing flagged); tied scores move
    together.
    """
    s, y = _unpack(scores, labels)
    n_pos, n_neg = _require_both(y)
    thr = np.unique(s)[::-1]
    pos = np.sort(s[y == 1])
    neg = np.sort(s[y == 0])
    tp = n_pos - np.searchsorted(pos, thr, side="left")
    fp = n_neg - np.searchsorted(neg, thr, side="left")
    fpr = np.r_[0.0, fp / n_neg]
    fnr = np.r_[1.0, 1.0 - tp / n_pos]
    return np.r_[np.inf, thr], fpr, fnr


def eer(scores, labels=None) -> float:
    """Error rate where FPR equals FNR, interpolating linearly between ROC points."""
    _, fpr, fnr = roc_points(scores, labels)
    diff = fpr - fnr
    k = int(np.argmax(diff >= 0))
    if diff[k] == 0 or k == 0:
        return float(fpr[k])
    lam = -diff[k - 1] / (diff[k] - diff[k - 1])
    return float(fpr[k - 1] + lam * (fpr[k] - fpr[k - 1]))


def _check_tau(tau: float) -> None:
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")


def confusion(scores, labels=None, tau: float = 0.5) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn) with ``score < tau`` -> normal."""
    _check_tau(tau)
    s, y = _unpack(scores, labels)
    pred = s >= tau
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    tn = int(np.sum(~pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    return tp, fp, tn, fn


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    # no predicted and no actual positives counts as perfect agreement
    if tp + fp == 0:
        return 1.0 if fn == 0 else 0.0
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def f1_at_tau(scores, labels=None, tau: float = 0.5) -> float:
    tp, fp, _, fn = confusion(scores, labels, tau)
    return f1_from_counts(tp, fp, fn)


def acc_at_tau(scores, labels=None, tau: float = 0.5) -> float:
    tp, fp, tn, fn = confusion(scores, labels, tau)
    return (tp + tn) / (tp + fp + tn + fn)


def evaluate(scores, labels=None, tau: float = 0.5) -> MetricsReport:
    s, y = _unpack(scores, labels)
    n_pos, n_neg = _require_both(y)
    return MetricsReport(
        auc=auc(s, y), eer=eer(s, y), f1=f1_at_tau(s, y, tau), acc=acc_at_tau(s, y, tau),
        n_pos=n_pos, n_neg=n_neg, tau_used=tau,
    )


SWEEP_AXES = ("outlier_ratio", "epoch", "eta", "p", "fusion_mode", "k")
SWEEP_FIELDS = ("axis_value", "auc", "eer", "f1", "acc", "n_pos", "n_neg", "seed")


@dataclass
class SweepRow:
    axis_value: object
    seed: int
    report: MetricsReport | None
    error: str | None = None

    def as_csv(self) -> list:
        if self.report is None:
            return [self.axis_value, "", "", "", "", "", "", self.seed]
        r = self.report
        return [self.axis_value, repr(r.auc), repr(r.eer), repr(r.f1), repr(r.acc), r.n_pos, r.n_neg, self.seed]


def sweep(run_fn: Callable[[object, int], MetricsReport], axis: str, values: Sequence,
          seeds: Iterable[int] = (0,)) -> list[SweepRow]:
    """Evaluate ``run_fn(value, seed)`` over an axis; failed points are kept as empty rows."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    rows = []
    seeds = list(seeds)
    for value in values:
        for seed in seeds:
            try:
                rows.append(SweepRow(value, seed, run_fn(value, seed)))
            except Exception as exc:  # noqa: BLE001 - sweep records and continues
                logger.warning("sweep point %s=%r seed=%d failed: %s", axis, value, seed, exc)
                rows.append(SweepRow(value, seed, None, f"{type(exc).__name__}: {exc}"))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SWEEP_FIELDS)
        for row in rows:
            w.writerow(row.as_csv())


def mean_by_value(rows: Sequence[SweepRow], metric: str = "auc") -> dict:
    out: dict = {}
    for row in rows:
        if row.report is not None:
            out.setdefault(row.axis_value, []).append(getattr(row.report, metric))
    return {k: float(np.mean(v)) if v else math.nan for k, v in out.items()}
