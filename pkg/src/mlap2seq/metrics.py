"""Subtoken F1 and multi-run statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .vocab import SPECIALS


@dataclass(frozen=True)
class F1Result:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def f1_score(pred_words, truth_words):
    """Set-based precision/recall/F1 of predicted vs. ground-truth subtokens.

    Both sides are deduplicated and order is ignored; special tokens are
    dropped from the prediction first, so an UNK can never count as a hit.
    """
    pred = {w for w in pred_words if w not in SPECIALS}
    truth = set(truth_words)
    tp = len(pred & truth)
    fp = len(pred - truth)
    fn = len(truth - pred)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return F1Result(precision, recall, f1, tp, fp, fn)


def evaluate_split(model, graphs, target_vocab, score_file=None, batch_size=256):
    """Mean per-graph F1 of greedy predictions; optionally writes per-example scores.

    Score file lines are ``provenance<TAB>decoded_words<TAB>f1``.
    """
    if not graphs:
        raise ValueError("evaluate_split: empty split")
    preds = model.predict(graphs, batch_size=batch_size)
    scores = []
    lines = []
    for g, ids in zip(graphs, preds):
        words = target_vocab.decode_all(ids)
        r = f1_score(words, g.target)
        scores.append(r.f1)
        lines.append(f"{g.provenance}\t{' '.join(words)}\t{r.f1:.6f}")
    if score_file is not None:
        Path(score_file).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return float(np.mean(scores))


@dataclass
class RunReport:
    scores: list
    mean: float
    std: float | None  # unbiased; None for a single run
    n: int

    def __str__(self):
        std = "n/a" if self.std is None else f"{self.std:.4f}"
        return f"{self.mean:.4f} +/- {std} (n={self.n})"


def aggregate_runs(per_seed_scores):
    scores = [float(s) for s in per_seed_scores]
    if not scores:
        raise ValueError("aggregate_runs: need at least one score")
    std = float(np.std(scores, ddof=1)) if len(scores) >= 2 else None
    return RunReport(scores, float(np.mean(scores)), std, len(scores))


@dataclass
class Comparison:
    p_value: float
    cohens_d: float
    test: str = "Welch two-sample t-test"


def cohens_d(a, b):
    """Standardised mean difference (a - b) using the pooled standard deviation."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    na, nb = len(a), len(b)
    pooled = math.sqrt(((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2))
    diff = a.mean() - b.mean()
    if pooled == 0.0:
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    return float(diff / pooled)


def compare_runs(scores_a, scores_b):
    a, b = np.asarray(scores_a, dtype=np.float64), np.asarray(scores_b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("compare_runs: each sample needs at least two scores")
    d = cohens_d(a, b)
    if a.var(ddof=1) == 0.0 and b.var(ddof=1) == 0.0:
        # t statistic undefined; identical constants are indistinguishable, distinct ones are not
        return Comparison(1.0 if a.mean() == b.mean() else 0.0, d)
    p = float(stats.ttest_ind(a, b, equal_var=False).pvalue)
    return Comparison(p, d)
