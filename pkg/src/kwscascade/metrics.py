"""Detection metrics: pair-counting AUC, ROC points, EER and recall at a fixed false-alarm rate.

Acceptance is ``score >= threshold`` everywhere; AUC counts ties as one half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import EmptyClass, NoPositives


@dataclass(frozen=True)
class ScoreSet:
    pos: tuple
    neg: tuple

    def __post_init__(self):
        object.__setattr__(self, "pos", tuple(float(x) for x in self.pos))
        object.__setattr__(self, "neg", tuple(float(x) for x in self.neg))
        if not all(math.isfinite(x) for x in self.pos + self.neg):
            raise ValueError("scores must be finite")

    def require_both(self):
        if not self.pos or not self.neg:
            raise EmptyClass(f"need both classes, got {len(self.pos)} positive / {len(self.neg)} negative")
        return np.asarray(self.pos), np.asarray(self.neg)


@dataclass(frozen=True)
class StreamEval:
    positive_best: tuple  # best final score per positive utterance (0.0 when missed)
    false_alarms: tuple  # scores of every detection on negative audio
    total_negative_hours: float

    def __post_init__(self):
        if not self.total_negative_hours > 0:
            raise ValueError("total_negative_hours must be > 0")


def auc(s: ScoreSet) -> float:
    pos, neg = s.require_both()
    neg = np.sort(neg)
    below = np.searchsorted(neg, pos, side="left")
    not_above = np.searchsorted(neg, pos, side="right")
    wins = below.sum() + 0.5 * (not_above - below).sum()
    return float(wins / (pos.size * neg.size))


def _rates(pos, neg, thresholds):
    """Accept counts at each threshold: (false accepts, true accepts)."""
    neg_sorted, pos_sorted = np.sort(neg), np.sort(pos)
    fa = neg.size - np.searchsorted(neg_sorted, thresholds, side="left")
    ta = pos.size - np.searchsorted(pos_sorted, thresholds, side="left")
    return fa, ta


def roc_points(s: ScoreSet) -> list[tuple[float, float]]:
    """(FAR, TPR) at every distinct score threshold, plus (0, 0) and (1, 1)."""
    pos, neg = s.require_both()
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    fa, ta = _rates(pos, neg, thresholds)
    pts = [(0.0, 0.0)]
    pts += [(float(f / neg.size), float(t / pos.size)) for f, t in zip(fa, ta)]
    if pts[-1] != (1.0, 1.0):
        pts.append((1.0, 1.0))
    return pts


def roc_area(points) -> float:
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def eer(s: ScoreSet) -> float:
    """Equal error rate over a threshold sweep at every distinct score.

    FAR(t) = |neg >= t| / |neg| and FRR(t) = |pos < t| / |pos|. If the two
    curves never meet exactly, the crossing is interpolated linearly between
    the bracketing thresholds (one past the top score closes the sweep).
    """
    pos, neg = s.require_both()
    thresholds = np.unique(np.concatenate([pos, neg]))
    fa, ta = _rates(pos, neg, thresholds)
    P, N = pos.size, neg.size
    fa = np.append(fa, 0)
    fr = np.append(P - ta, P)
    # sign of FAR - FRR compared in integers: fa/N - fr/P
    diff = fa * P - fr * N
    zero = np.flatnonzero(diff == 0)
    if zero.size:
        return float(Fraction(int(fa[zero[0]]), N))
    i = int(np.flatnonzero(diff < 0)[0]) - 1  # diff[0] > 0 always (everything accepted)
    return float(_interpolate(int(fa[i]), int(fr[i]), int(fa[i + 1]), int(fr[i + 1]), P, N))


def _interpolate(fa0, fr0, fa1, fr1, P, N) -> Fraction:
    far0, frr0 = Fraction(fa0, N), Fraction(fr0, P)
    far1, frr1 = Fraction(fa1, N), Fraction(fr1, P)
    d0, d1 = far0 - frr0, far1 - frr1
    alpha = d0 / (d0 - d1)
    return far0 + alpha * (far1 - far0)


def allowed_false_alarms(fa_per_hour: float, hours: float) -> int:
    # tiny slack so 0.29 * 100 counts as 29, not 28.999...
    return int(math.floor(fa_per_hour * hours + 1e-9))


def recall_at_far(se: StreamEval, fa_per_hour: float) -> tuple[float, float]:
    """Recall at the lowest threshold that keeps false alarms within the budget."""
    if not se.positive_best:
        raise NoPositives("no positive utterances")
    if fa_per_hour < 0:
        raise ValueError("fa_per_hour must be >= 0")
    k = allowed_false_alarms(fa_per_hour, se.total_negative_hours)
    fa = sorted(se.false_alarms, reverse=True)
    if len(fa) <= k:
        threshold = 0.0
    else:
        threshold = float(np.nextafter(fa[k], np.inf))
    pos = np.asarray(se.positive_best, dtype=np.float64)
    return float((pos >= threshold).mean()), threshold


def report(s: ScoreSet, se: StreamEval | None = None, rates=(0.5, 1.0)) -> dict:
    out = {"auc": auc(s), "eer": eer(s)}
    if se is not None:
        out["recall_at_far"] = {str(float(r)): recall_at_far(se, r)[0] for r in rates}
    return out
