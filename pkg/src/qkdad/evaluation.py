"""ROC/AUC evaluation and the repeated-trial protocol.

Convention: anomalous samples (label 1) are the positive class and higher
scores mean "more anomalous". The normal-positive convention with inverted
scores gives the same AUC.
"""
from dataclasses import dataclass
import numpy as np

from . import kernels
from .errors import DegenerateLabelsError, EmptyDataError, ShapeError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def tpr(self):
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else float("nan")

    @property
    def fpr(self):
        return self.fp / (self.fp + self.tn) if self.fp + self.tn else float("nan")


@dataclass
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    n_pos: int = 0
    n_neg: int = 0

    def __len__(self):
        return self.fpr.shape[0]


@dataclass(frozen=True)
class AucResult:
    auc: float
    method: str
    n_pos: int
    n_neg: int

    def __float__(self):
        return self.auc


@dataclass
class TrialStats:
    """Per-trial AUCs (fractions) with mean in percent and variance in percent^2."""
    aucs: np.ndarray
    mean_percent: float
    variance_percent2: float

    @property
    def mean(self):
        return self.mean_percent / 100.0

    @classmethod
    def from_aucs(cls, aucs):
        a = np.asarray(aucs, dtype=np.float64)
        if a.size == 0:
            raise EmptyDataError("no trials")
        pct = 100.0 * a
        return cls(a, float(pct.mean()), float(pct.var()))


def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ShapeError(f"{s.size} scores vs {y.size} labels")
    if s.size == 0:
        raise EmptyDataError("no scores to evaluate")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def _check_both_classes(y):
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError(f"need both classes, got {n_pos} positives and {n_neg} negatives")
    return n_pos, n_neg


def confusion(scores, labels, tau):
    """Predicted anomalous iff ``score > tau``."""
    s, y = _check(scores, labels)
    pred = s > tau
    pos = y == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    return ConfusionMatrix(tp=tp, fn=int(pos.sum()) - tp, fp=fp, tn=int((~pos).sum()) - fp)


def roc_curve(scores, labels):
    """One vertex per distinct score plus the ``(0, 0)`` start at threshold +inf."""
    s, y = _check(scores, labels)
    n_pos, n_neg = _check_both_classes(y)
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    last_of_group = np.r_[s_sorted[1:] != s_sorted[:-1], True]
    tp = np.cumsum(y_sorted)[last_of_group]
    fp = np.cumsum(1 - y_sorted)[last_of_group]
    thresholds = np.r_[np.inf, s_sorted[last_of_group]]
    fpr = np.r_[0.0, fp / n_neg]
    tpr = np.r_[0.0, tp / n_pos]
    return RocCurve(thresholds, fpr, tpr, n_pos, n_neg)


def auc_trapezoid(curve):
    f, t = curve.fpr, curve.tpr
    area = float(np.sum((f[1:] - f[:-1]) * (t[1:] + t[:-1])) * 0.5)
    return AucResult(area, "trapezoid", curve.n_pos, curve.n_neg)


def auc_rank(scores, labels):
    """Mann-Whitney AUC with midranks for ties."""
    s, y = _check(scores, labels)
    n_pos, n_neg = _check_both_classes(y)
    ranks = kernels.midranks(np.ascontiguousarray(s))
    u = float(ranks[y == 1].sum()) - n_pos * (n_pos + 1) / 2.0
    return AucResult(u / (n_pos * n_neg), "rank", n_pos, n_neg)


def auc(scores, labels, method="rank"):
    if method == "rank":
        return auc_rank(scores, labels)
    if method == "trapezoid":
        return auc_trapezoid(roc_curve(scores, labels))
    raise ValueError(f"unknown AUC method {method!r}")


def trial_seeds(seed, n_trials):
    """Independent per-trial seeds derived from one master seed."""
    children = np.random.SeedSequence(int(seed)).spawn(int(n_trials))
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def repeated_eval(score_fn, make_test_set, n_trials, seed):
    """Score ``n_trials`` freshly generated 1:1 test sets and aggregate AUC.

    ``score_fn(features) -> scores`` and ``make_test_set(trial_seed) -> Dataset``
    (labelled). Trials run in order, so the aggregate is bitwise stable.
    """
    if int(n_trials) < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    aucs = []
    for ts in trial_seeds(seed, n_trials):
        test = make_test_set(ts)
        aucs.append(auc_rank(score_fn(test.features), test.labels).auc)
    return TrialStats.from_aucs(aucs)


def format_trial_stats(stats):
    lines = [f"trial {i} auc {'%.17g' % a}" for i, a in enumerate(stats.aucs)]
    lines.append(f"mean_percent {'%.17g' % stats.mean_percent}")
    lines.append(f"variance_percent2 {'%.17g' % stats.variance_percent2}")
    return "\n".join(lines) + "\n"

