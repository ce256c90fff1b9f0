"""Evaluation metrics computed exactly from rank statistics.

AUC uses the Mann-Whitney identity with average ranks, so ties contribute
half credit and the result matches the brute-force pairwise definition to
floating point. MRR resolves ties pessimistically: a positive tied with k
negatives is ranked below all k of them, which keeps constant scorers from
looking better than chance.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .columns import DataError


def accuracy(pred_class: Sequence[int], truth: Sequence[int]) -> float:
    """Fraction of exact matches between two equal-length label lists."""
    p = np.asarray(pred_class)
    t = np.asarray(truth)
    if p.shape != t.shape or p.ndim != 1:
        raise DataError(f"length mismatch: {p.shape} vs {t.shape}")
    if len(p) == 0:
        raise DataError("accuracy of empty input")
    return float(np.mean(p == t))


def rmse(pred: Sequence[float], truth: Sequence[float]) -> float:
    """Root mean squared error."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise DataError(f"length mismatch: {p.shape} vs {t.shape}")
    if len(p) == 0:
        raise DataError("rmse of empty input")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the average of their positions."""
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    n = len(s)
    boundary = np.ones(n, dtype=bool)
    boundary[1:] = s[1:] != s[:-1]
    group_start = np.flatnonzero(boundary)
    group_len = np.diff(np.append(group_start, n))
    # average of positions group_start .. group_start+len-1, 1-based
    avg = group_start + (group_len - 1) / 2.0 + 1.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat(avg, group_len)
    return ranks


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve, P(pos > neg) + 0.5 P(tie), exact."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise DataError(f"length mismatch: {s.shape} vs {y.shape}")
    pos = y == 1
    neg = y == 0
    if not (pos | neg).all():
        raise DataError("labels must be 0 or 1")
    n_pos = int(pos.sum())
    n_neg = int(neg.sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("auc needs both classes present")
    ranks = _average_ranks(s)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def mrr(ranked_candidates: Sequence[Sequence[tuple[float, int]]]) -> float:
    """Mean reciprocal rank over queries of (score, is_positive) candidates.

    Each query must contain exactly one positive. The positive's rank is
    1 + the number of negatives scoring >= it, so ties count against it.
    """
    if len(ranked_candidates) == 0:
        raise DataError("mrr of empty input")
    total = 0.0
    for qi, candidates in enumerate(ranked_candidates):
        pos_scores = [s for s, flag in candidates if flag == 1]
        if len(pos_scores) != 1:
            raise DataError(f"query {qi} has {len(pos_scores)} positives, wants 1")
        p = pos_scores[0]
        rank = 1 + sum(1 for s, flag in candidates if flag != 1 and s >= p)
        total += 1.0 / rank
    return total / len(ranked_candidates)
