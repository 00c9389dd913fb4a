"""Evaluation battery for realtime risk monitoring.

Episode-level flagging classification (ROC / PR), time-dependent
concordance over event-time bins, F1-optimal flag threshold, and lead-time
analysis.  Everything operates on :class:`MonitoringTrace` objects, which
carry a per-episode hazard step function plus the episode outcome, so the
metrics are independent of how the hazards were produced.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from statistics import NormalDist
from typing import Iterable, Sequence

import numpy as np

from .errors import SingleClass

DEFAULT_TIME_BINS = ((0.0, 24.0), (24.0, 48.0), (48.0, 72.0), (72.0, math.inf))

_Z95 = NormalDist().inv_cdf(0.975)


@dataclass(frozen=True, eq=False)
class MonitoringTrace:
    """Hazard trajectory and outcome for one monitored episode.

    The hazard is a step function: value ``hazards[k]`` on
    ``[piece_starts[k], piece_ends[k])``.  Pieces are ascending and may have
    gaps (unmonitored intervals contribute nothing to any metric).
    ``first_event_time`` is the first event in the monitored window, if any;
    monitoring may continue past it (recurrent events).
    """

    episode_id: str
    piece_starts: np.ndarray
    piece_ends: np.ndarray
    hazards: np.ndarray
    first_event_time: float | None
    monitored_until: float

    def __post_init__(self):
        for name in ("piece_starts", "piece_ends", "hazards"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.piece_starts.size == self.piece_ends.size == self.hazards.size):
            raise ValueError("piece arrays must be aligned")
        if self.piece_starts.size == 0:
            raise ValueError("trace must cover a non-empty period")
        if np.any(self.piece_ends <= self.piece_starts):
            raise ValueError("pieces must have positive length")
        if np.any(self.piece_starts[1:] < self.piece_ends[:-1]):
            raise ValueError("pieces must be ascending and non-overlapping")
        if np.any(self.hazards <= 0) or not np.all(np.isfinite(self.hazards)):
            raise ValueError("hazards must be positive and finite")
        if self.first_event_time is not None:
            t = float(self.first_event_time)
            if not (self.start <= t <= self.monitored_until):
                raise ValueError("first_event_time outside the monitored range")
            object.__setattr__(self, "first_event_time", t)
        object.__setattr__(self, "monitored_until", float(self.monitored_until))

    @property
    def start(self) -> float:
        return float(self.piece_starts[0])

    def sup_hazard(self, t_lo: float, t_hi: float) -> float:
        """Supremum of the hazard over [t_lo, t_hi); -inf if no piece intersects."""
        hit = (self.piece_starts < t_hi) & (self.piece_ends > t_lo)
        if not hit.any():
            return -math.inf
        return float(self.hazards[hit].max())

    def first_crossing(self, rho: float, before: float | None = None) -> float | None:
        """Infimum time with hazard >= rho, restricted to [start, before)."""
        limit = self.monitored_until if before is None else before
        hit = (self.hazards >= rho) & (self.piece_starts < limit)
        idx = np.nonzero(hit)[0]
        if idx.size == 0:
            return None
        return float(self.piece_starts[idx[0]])

    def cumulative_hazard(self, t: float) -> float:
        """Integral of the hazard from the trace start to t (gaps count zero)."""
        lo = np.minimum(np.maximum(self.piece_starts, self.start), t)
        hi = np.minimum(self.piece_ends, t)
        lengths = np.maximum(hi - lo, 0.0)
        return float(np.sum(self.hazards * lengths))

    def survival_at(self, t: float) -> float:
        """exp(-cumulative hazard) up to t; flat past the monitored end."""
        return math.exp(-self.cumulative_hazard(t))


@dataclass(frozen=True)
class FlagOutcome:
    """Flag-protocol result for one episode at a fixed threshold."""

    episode_id: str
    score: float
    label: bool
    flag_time: float | None
    outcome: str


def episode_score(trace: MonitoringTrace) -> tuple[float, bool]:
    """Score an episode for threshold sweeps.

    Positives (episodes with an event) score the hazard supremum over the
    window *before* the first event, so a post-event spike can never count
    as a timely flag; negatives score the supremum over the whole monitored
    period.  A positive whose event opens the window (empty pre-event
    window) scores -inf: it can never be flagged in time.
    """
    if trace.first_event_time is None:
        return trace.sup_hazard(trace.start, trace.monitored_until), False
    score = trace.sup_hazard(trace.start, trace.first_event_time)
    if score == -math.inf:
        warnings.warn(
            f"episode {trace.episode_id!r}: event at the first monitored instant; "
            "it can never be flagged in time",
            stacklevel=2,
        )
    return score, True


def flag_outcome(trace: MonitoringTrace, rho: float) -> FlagOutcome:
    """Run the flag-then-wait protocol at threshold rho for one episode."""
    score, label = episode_score(trace)
    if label:
        flag = trace.first_crossing(rho, before=trace.first_event_time)
        outcome = "TP" if flag is not None else "FN"
    else:
        flag = trace.first_crossing(rho)
        outcome = "FP" if flag is not None else "TN"
    return FlagOutcome(trace.episode_id, score, label, flag, outcome)


def outcomes_at(traces: Iterable[MonitoringTrace], rho: float) -> list[FlagOutcome]:
    return [flag_outcome(t, rho) for t in traces]


def _scores_labels(outcomes) -> tuple[np.ndarray, np.ndarray]:
    scores, labels = [], []
    for item in outcomes:
        if isinstance(item, FlagOutcome):
            scores.append(item.score)
            labels.append(item.label)
        else:
            s, lab = item
            scores.append(float(s))
            labels.append(bool(lab))
    return np.array(scores, dtype=np.float64), np.array(labels, dtype=bool)


@dataclass(frozen=True, eq=False)
class CurveSet:
    """ROC and PR curves with their areas; rows are (threshold, x, y)."""

    roc: np.ndarray
    pr: np.ndarray
    auroc: float
    auc_pr: float


def roc_pr_curves(outcomes) -> CurveSet:
    """Sweep the flag threshold over every distinct score.

    An episode is predicted positive at threshold rho iff its score is
    finite and >= rho (a -inf score marks an episode that no threshold can
    flag in time).  The ROC is completed to (1, 1) with a -inf sentinel
    threshold so the trapezoid area equals the tie-aware rank statistic;
    the PR curve is left at its achievable recall.

    Raises ``SingleClass`` unless both labels are present.
    """
    scores, labels = _scores_labels(outcomes)
    n_pos = int(labels.sum())
    n_neg = int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("need at least one positive and one negative episode")

    finite = np.isfinite(scores)
    thresholds = np.unique(scores[finite])[::-1]
    roc = [(math.inf, 0.0, 0.0)]
    pr = []
    auc_pr = 0.0
    prev_recall = 0.0
    prev_tp = prev_fp = 0
    # twice the trapezoid numerator, kept in exact integer arithmetic so the
    # area equals the tie-aware rank statistic to the last bit
    auroc_num = 0
    for rho in thresholds:
        flagged = finite & (scores >= rho)
        tp = int((flagged & labels).sum())
        fp = int((flagged & ~labels).sum())
        tpr = tp / n_pos
        fpr = fp / n_neg
        precision = tp / (tp + fp) if tp + fp else 0.0
        roc.append((float(rho), fpr, tpr))
        pr.append((float(rho), tpr, precision))
        auc_pr += (tpr - prev_recall) * precision
        prev_recall = tpr
        auroc_num += (fp - prev_fp) * (tp + prev_tp)
        prev_tp, prev_fp = tp, fp
    if roc[-1][1:] != (1.0, 1.0):
        roc.append((-math.inf, 1.0, 1.0))
        auroc_num += (n_neg - prev_fp) * (n_pos + prev_tp)
    auroc = auroc_num / (2 * n_pos * n_neg)
    return CurveSet(np.array(roc), np.array(pr), auroc, auc_pr)


def f1_optimal_threshold(outcomes) -> float:
    """Smallest distinct score maximizing F1 (earlier flagging wins ties)."""
    scores, labels = _scores_labels(outcomes)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise SingleClass("need at least one positive episode")
    finite = np.isfinite(scores)
    best_rho = math.nan
    best_f1 = -1.0
    for rho in np.unique(scores[finite]):
        flagged = finite & (scores >= rho)
        tp = int((flagged & labels).sum())
        fp = int((flagged & ~labels).sum())
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / n_pos
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        if f1 > best_f1:
            best_f1 = f1
            best_rho = float(rho)
    return best_rho


@dataclass(frozen=True)
class AuctBin:
    """Binned time-dependent concordance; value is None when the bin saw no event times."""

    t_lo: float
    t_hi: float
    value: float | None
    ci_low: float | None
    ci_high: float | None
    n_event_times: int


def auct(
    traces: Sequence[MonitoringTrace],
    bins: Sequence[tuple[float, float]] = DEFAULT_TIME_BINS,
) -> list[AuctBin]:
    """Time-dependent concordance, binned and averaged over event times.

    Times run on the per-episode clock (hours since monitoring start), the
    usual alignment for at-risk comparisons.  At each observed first-event
    time t, every pair (i, j) with an event for i strictly before t and j
    still monitored at t is scored: concordant when predicted survival at t
    is lower for i, ties counting one half.  The bin value is the mean over
    its event times; the confidence interval is a normal approximation over
    those binned values (absent when a bin holds fewer than two).
    """
    rel_end = []
    is_event = []
    for tr in traces:
        if tr.first_event_time is not None:
            rel_end.append(tr.first_event_time - tr.start)
            is_event.append(True)
        else:
            rel_end.append(tr.monitored_until - tr.start)
            is_event.append(False)
    rel_end_arr = np.array(rel_end)
    is_event_arr = np.array(is_event, dtype=bool)

    points: list[tuple[float, float]] = []
    for t in np.unique(rel_end_arr[is_event_arr]):
        i_idx = np.nonzero(is_event_arr & (rel_end_arr < t))[0]
        j_idx = np.nonzero(rel_end_arr >= t)[0]
        if i_idx.size == 0 or j_idx.size == 0:
            continue
        s_i = np.array([traces[i].survival_at(traces[i].start + t) for i in i_idx])
        s_j = np.array([traces[j].survival_at(traces[j].start + t) for j in j_idx])
        less = (s_i[:, None] < s_j[None, :]).sum()
        ties = (s_i[:, None] == s_j[None, :]).sum()
        points.append((float(t), (less + 0.5 * ties) / (i_idx.size * j_idx.size)))

    out = []
    for lo, hi in bins:
        vals = [v for t, v in points if lo <= t < hi]
        if not vals:
            out.append(AuctBin(lo, hi, None, None, None, 0))
            continue
        mean = float(np.mean(vals))
        if len(vals) > 1:
            se = float(np.std(vals, ddof=1)) / math.sqrt(len(vals))
            ci = (mean - _Z95 * se, mean + _Z95 * se)
        else:
            ci = (None, None)
        out.append(AuctBin(lo, hi, mean, ci[0], ci[1], len(vals)))
    return out


def lead_times(
    traces: Iterable[MonitoringTrace],
    rho: float,
    bucket_hours: float = 24.0,
) -> tuple[list[float], list[tuple[float, float, int]]]:
    """Hours between the first threshold crossing and the event, per true positive.

    Returns the raw lead times plus a histogram over fixed-width buckets
    (24-hour windows by default).
    """
    if not math.isfinite(rho):
        raise ValueError("rho must be finite")
    leads = []
    for tr in traces:
        if tr.first_event_time is None:
            continue
        flag = tr.first_crossing(rho, before=tr.first_event_time)
        if flag is not None:
            leads.append(tr.first_event_time - flag)
    if not leads:
        return [], []
    n_buckets = int(max(math.floor(lead / bucket_hours) for lead in leads)) + 1
    counts = [0] * n_buckets
    for lead in leads:
        counts[min(int(lead // bucket_hours), n_buckets - 1)] += 1
    histogram = [
        (k * bucket_hours, (k + 1) * bucket_hours, c) for k, c in enumerate(counts)
    ]
    return leads, histogram
