"""Binary classification metrics and the one-sided Wilcoxon signed-rank test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ScoredPredictions:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float).reshape(-1)
        y = np.asarray(self.labels, dtype=float).reshape(-1)
        if s.shape != y.shape:
            raise MetricError(f"{s.size} scores but {y.size} labels")
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise MetricError("labels must be 0 or 1")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y)

    def require_both_classes(self) -> None:
        pos = int(self.labels.sum())
        if pos == 0 or pos == self.labels.size:
            raise MetricError("curve metrics need at least one positive and one negative")


def _as_preds(p, labels=None) -> ScoredPredictions:
    if isinstance(p, ScoredPredictions):
        return p
    return ScoredPredictions(p, labels)


def auprc(p, labels=None) -> float:
    """Average precision with equal scores treated as one block.

    Sum over score blocks (descending) of precision at the block's end times
    the recall gained inside the block.
    """
    p = _as_preds(p, labels)
    p.require_both_classes()
    order = np.argsort(-p.scores, kind="stable")
    s = p.scores[order]
    tp = np.cumsum(p.labels[order])
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp_end = tp[ends]
    precision = tp_end / (ends + 1)
    recall = tp_end / tp[-1]
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def auroc(p, labels=None) -> float:
    """Mann-Whitney form: P(score+ > score-) + 0.5 * P(tie)."""
    p = _as_preds(p, labels)
    p.require_both_classes()
    ranks = stats.rankdata(p.scores)
    pos = p.labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def classification_report(p, labels=None, threshold: float = 0.0) -> dict[str, float]:
    """Precision/recall/F1/accuracy of ``score >= threshold``; 0/0 counts as 0."""
    p = _as_preds(p, labels)
    pred = p.scores >= threshold
    truth = p.labels == 1
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    tn = int(np.sum(~pred & ~truth))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    accuracy = (tp + tn) / p.labels.size if p.labels.size else 0.0
    return {"precision": precision, "recall": recall, "f1": f1, "accuracy": accuracy}


EXACT_MAX_N = 20


def signed_rank_statistic(a, b) -> tuple[float, np.ndarray]:
    """W+ (sum of ranks of positive differences) and the nonzero-difference ranks."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    d = d[d != 0]
    if d.size == 0:
        raise MetricError("all paired differences are zero")
    ranks = stats.rankdata(np.abs(d))
    return float(ranks[d > 0].sum()), ranks


def _exact_upper_tail(ranks: np.ndarray, w: float) -> float:
    # doubled ranks are integers even with midrank ties
    r2 = np.rint(2 * ranks).astype(np.int64)
    counts = np.zeros(int(r2.sum()) + 1)
    counts[0] = 1.0
    for r in r2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: counts.size - r]
        counts = counts + shifted
    total = 2.0 ** ranks.size
    w2 = int(np.rint(2 * w))
    return float(counts[w2:].sum() / total)


def wilcoxon_signed_rank(a, b, alternative: str = "greater") -> float:
    """One-sided Wilcoxon signed-rank p-value for paired samples.

    Zero differences are dropped. Exact null distribution (all sign
    assignments) up to 20 nonzero pairs, tie-corrected normal approximation
    with continuity correction above that.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise MetricError("paired samples must be 1-d and of equal length")
    if a.size < 5:
        raise MetricError("need at least 5 pairs")
    if alternative not in ("greater", "less"):
        raise MetricError(f"unsupported alternative {alternative!r}")
    if alternative == "less":
        a, b = b, a
    w, ranks = signed_rank_statistic(a, b)
    n = ranks.size
    if n <= EXACT_MAX_N:
        return _exact_upper_tail(ranks, w)
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
    z = (w - mean - 0.5) / math.sqrt(var)
    return float(stats.norm.sf(z))
