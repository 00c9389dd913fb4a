"""Gradient tree-boosted hazard estimation for recurrent-event data.

The model is a multiplicative ensemble over time and covariates:

    hazard(t, x) = exp(f0 + nu * sum_m tree_m(t, x))

where ``f0`` is the exact constant-log-hazard MLE ``log(events / exposure)``
and each tree is grown greedily on a second-order expansion of the
counting-process negative log-likelihood

    NLL = sum over epochs of  integral(hazard dt)  -  delta * log hazard.

Within an epoch the hazard only changes at tree time thresholds, so every
integral here is computed exactly by partitioning the epoch at those
thresholds; no quadrature is involved.

Per epoch fragment in a tree node, the expansion statistics are
``g = exp(F) * dt - delta`` and ``h = exp(F) * dt``; split gain is the usual
``G_L^2/H_L + G_R^2/H_R - G_P^2/H_P`` and the leaf value is the exact
per-leaf minimizer ``log(sum delta / sum exp(F) dt)``, clamped.  With the
exact clamped optimum and ``nu`` in (0, 1], the training loss is
non-increasing per round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import DatasetSchema, Episode, check_episodes, event_count, total_exposure
from .errors import DegenerateData, OutOfRange, SchemaMismatch
from .metrics import MonitoringTrace

# Overflow guard on log-hazards; far outside any range training can produce.
_LOG_CLIP = 700.0

TIME_FEATURE_NAME = "t"


@dataclass(frozen=True)
class TrainConfig:
    """Boosting hyperparameters.

    ``max_depth`` and ``num_trees`` are the cross-validated knobs;
    ``num_trees = 0`` is allowed and yields the constant-hazard model.
    """

    max_depth: int = 2
    num_trees: int = 100
    nu: float = 0.1
    max_quantile_bins: int = 256
    min_hessian_per_leaf: float = 1e-6
    leaf_value_clamp: float = 5.0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.num_trees < 0:
            raise ValueError("num_trees must be >= 0")
        if not 0.0 < self.nu <= 1.0:
            raise ValueError("nu must be in (0, 1]")
        if self.max_quantile_bins < 2:
            raise ValueError("max_quantile_bins must be >= 2")
        if self.min_hessian_per_leaf <= 0 or self.leaf_value_clamp <= 0:
            raise ValueError("min_hessian_per_leaf and leaf_value_clamp must be positive")


@dataclass(frozen=True)
class TreeNode:
    """Binary regression tree node; ``feature is None`` marks a leaf.

    Feature index 0 is the time axis; covariate j maps to index j + 1.
    Routing: value < threshold goes left, missing values follow
    ``missing_left``.
    """

    feature: int | None = None
    threshold: float = 0.0
    missing_left: bool = True
    gain: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @staticmethod
    def leaf(value: float) -> "TreeNode":
        return TreeNode(value=float(value))

    @staticmethod
    def split(feature, threshold, missing_left, gain, left, right) -> "TreeNode":
        return TreeNode(int(feature), float(threshold), bool(missing_left), float(gain), left, right)


def _walk(node: TreeNode):
    yield node
    if not node.is_leaf:
        yield from _walk(node.left)
        yield from _walk(node.right)


def _collect_time_thresholds(trees: Sequence[TreeNode]) -> np.ndarray:
    values = {
        node.threshold for tree in trees for node in _walk(tree) if node.feature == 0
    }
    return np.array(sorted(values), dtype=np.float64)


@dataclass(frozen=True, eq=False)
class HazardEnsemble:
    """Trained hazard model; immutable and safe for concurrent scoring.

    ``time_split_points`` is derived from the trees and is exactly the set
    of time thresholds they use: between consecutive points the hazard is
    constant in time, which is what makes every integral exact.
    ``train_nll_path`` records the training loss after each round (element 0
    is the constant model); it is diagnostics, not part of the model.
    """

    f0: float
    nu: float
    trees: tuple[TreeNode, ...]
    schema: DatasetSchema
    time_split_points: np.ndarray
    train_nll_path: tuple[float, ...] = ()

    def __post_init__(self):
        pts = np.asarray(self.time_split_points, dtype=np.float64).copy()
        pts.setflags(write=False)
        object.__setattr__(self, "time_split_points", pts)
        object.__setattr__(self, "trees", tuple(self.trees))
        derived = _collect_time_thresholds(self.trees)
        if pts.shape != derived.shape or not np.array_equal(pts, derived):
            raise ValueError("time_split_points must equal the time thresholds used by the trees")

    @staticmethod
    def from_trees(f0, nu, trees, schema, train_nll_path=()) -> "HazardEnsemble":
        trees = tuple(trees)
        return HazardEnsemble(
            float(f0), float(nu), trees, schema, _collect_time_thresholds(trees), tuple(train_nll_path)
        )

    @property
    def num_trees(self) -> int:
        return len(self.trees)

    def prefix(self, m: int) -> "HazardEnsemble":
        """The ensemble truncated to its first m trees."""
        if not 0 <= m <= len(self.trees):
            raise ValueError(f"prefix length {m} outside [0, {len(self.trees)}]")
        path = self.train_nll_path[: m + 1] if self.train_nll_path else ()
        return HazardEnsemble.from_trees(self.f0, self.nu, self.trees[:m], self.schema, path)


def _tree_values(root: TreeNode, t: np.ndarray, rows: np.ndarray, X: np.ndarray) -> np.ndarray:
    out = np.empty(t.shape[0], dtype=np.float64)
    stack = [(root, np.arange(t.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if node.is_leaf:
            out[idx] = node.value
            continue
        if node.feature == 0:
            left = t[idx] < node.threshold
        else:
            v = X[rows[idx], node.feature - 1]
            left = np.where(np.isnan(v), node.missing_left, v < node.threshold)
        stack.append((node.left, idx[left]))
        stack.append((node.right, idx[~left]))
    return out


def _log_hazard(model: HazardEnsemble, t: np.ndarray, rows: np.ndarray, X: np.ndarray) -> np.ndarray:
    raw = np.zeros(t.shape[0], dtype=np.float64)
    for tree in model.trees:
        raw += _tree_values(tree, t, rows, X)
    return np.clip(model.f0 + model.nu * raw, -_LOG_CLIP, _LOG_CLIP)


def hazard(model: HazardEnsemble, t: float, x) -> float:
    """Point hazard estimate; finite and positive for any input, missing included."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.schema.width,):
        raise SchemaMismatch(f"covariate width {x.shape} != schema width {model.schema.width}")
    value = _log_hazard(model, np.array([float(t)]), np.array([0]), x.reshape(1, -1))
    return float(np.exp(value[0]))


def _episode_arrays(episodes: Sequence[Episode], schema: DatasetSchema):
    starts, ends, deltas, rows = [], [], [], []
    for episode in episodes:
        for ep in episode.epochs:
            if ep.width != schema.width:
                raise SchemaMismatch(
                    f"episode {episode.episode_id!r}: epoch width {ep.width} != schema width {schema.width}"
                )
            starts.append(ep.t_start)
            ends.append(ep.t_end)
            deltas.append(ep.delta)
            rows.append(ep.covariates)
    X = np.array(rows, dtype=np.float64) if rows else np.empty((0, schema.width))
    return (
        np.array(starts, dtype=np.float64),
        np.array(ends, dtype=np.float64),
        np.array(deltas, dtype=np.int64),
        X,
    )


def _build_pieces(starts: np.ndarray, ends: np.ndarray, points: np.ndarray):
    """Partition each interval [start, end) at the given interior points.

    Returns (piece_start, piece_end, source_row, last_piece_index) with
    pieces in interval order; last_piece_index[i] is the final piece of
    interval i, where its event indicator lives.  Ends are carried exactly
    (never reconstructed as start + length) so shared boundaries stay
    bit-identical.
    """
    n = starts.shape[0]
    if n == 0:
        empty = np.empty(0)
        return empty, empty, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    if points.size == 0:
        return starts.copy(), ends.copy(), np.arange(n), np.arange(n)
    lo = np.searchsorted(points, starts, side="right")
    hi = np.searchsorted(points, ends, side="left")
    cuts = hi - lo
    n_pieces = cuts + 1
    off = np.concatenate([[0], np.cumsum(n_pieces)])
    total = int(off[-1])
    piece_start = np.empty(total)
    piece_end = np.empty(total)
    piece_start[off[:-1]] = starts
    piece_end[off[1:] - 1] = ends
    total_cuts = int(cuts.sum())
    if total_cuts:
        cum_cuts = np.concatenate([[0], np.cumsum(cuts)])
        k = np.arange(total_cuts)
        src = np.repeat(np.arange(n), cuts)
        within = k - cum_cuts[src]
        vals = points[lo[src] + within]
        pos = off[src] + 1 + within
        piece_start[pos] = vals
        piece_end[pos - 1] = vals
    rows = np.repeat(np.arange(n), n_pieces)
    return piece_start, piece_end, rows, off[1:] - 1


def fit_f0(episodes: Sequence[Episode]) -> float:
    """Exact MLE of a constant log-hazard: log(events / exposure).

    Raises ``DegenerateData`` on event-free or exposure-free data.
    """
    n = event_count(episodes)
    exposure = total_exposure(episodes)
    if n < 1:
        raise DegenerateData("no events in the training data")
    if exposure <= 0:
        raise DegenerateData("no exposure in the training data")
    return math.log(n / exposure)


def neg_log_likelihood(model: HazardEnsemble, episodes: Sequence[Episode]) -> float:
    """Counting-process negative log-likelihood, integrals computed exactly.

    The event term evaluates the hazard on the final partition piece of its
    epoch (the left limit at the event time), matching what training
    optimizes.
    """
    starts, ends, deltas, X = _episode_arrays(episodes, model.schema)
    t, t_hi, rows, last = _build_pieces(starts, ends, model.time_split_points)
    log_h = _log_hazard(model, t, rows, X)
    integral = float(np.sum(np.exp(log_h) * (t_hi - t)))
    event_term = float(np.sum(log_h[last[deltas == 1]]))
    return integral - event_term


def survival(model: HazardEnsemble, episode: Episode, t: float) -> float:
    """Probability of remaining event-free from monitoring start through t.

    The integral runs over the episode's covariate trajectory, exactly, with
    gaps contributing zero.  Raises ``OutOfRange`` when t lies before the
    monitoring start or past the last epoch.
    """
    m_start = model.schema.monitoring_start
    t = float(t)
    if t < m_start:
        raise OutOfRange(f"t={t} precedes monitoring start {m_start}")
    if t > episode.end:
        raise OutOfRange(f"t={t} exceeds the monitored range ending at {episode.end}")
    starts, ends, _, X = _episode_arrays([episode], model.schema)
    keep = starts < t
    starts, ends = starts[keep], np.minimum(ends[keep], t)
    ps, ps_hi, rows, _ = _build_pieces(starts, ends, model.time_split_points)
    log_h = _log_hazard(model, ps, np.nonzero(keep)[0][rows] if rows.size else rows, X)
    return math.exp(-float(np.sum(np.exp(log_h) * (ps_hi - ps))))


def hazard_steps(model: HazardEnsemble, epochs: Sequence, schema_width_checked: bool = False):
    """Hazard step function over the given epochs.

    Returns (piece_starts, piece_ends, hazards): each epoch partitioned at
    the model's time thresholds, the hazard constant on every piece.  The
    per-piece values depend only on (time, covariates), so scoring epochs
    one at a time or in bulk yields identical numbers.
    """
    starts = np.array([e.t_start for e in epochs], dtype=np.float64)
    ends = np.array([e.t_end for e in epochs], dtype=np.float64)
    if not schema_width_checked:
        for e in epochs:
            if e.width != model.schema.width:
                raise SchemaMismatch(
                    f"epoch width {e.width} != schema width {model.schema.width}"
                )
    X = (
        np.array([e.covariates for e in epochs], dtype=np.float64)
        if epochs
        else np.empty((0, model.schema.width))
    )
    t, t_hi, rows, _ = _build_pieces(starts, ends, model.time_split_points)
    values = np.exp(_log_hazard(model, t, rows, X))
    return t, t_hi, values


def monitoring_trace(model: HazardEnsemble, episode: Episode) -> MonitoringTrace:
    """Hazard trajectory for one episode as a step function over its epochs."""
    piece_starts, piece_ends, values = hazard_steps(model, episode.epochs)
    return MonitoringTrace(
        episode_id=episode.episode_id,
        piece_starts=piece_starts,
        piece_ends=piece_ends,
        hazards=values,
        first_event_time=episode.first_event_time(),
        monitored_until=episode.end,
    )


def monitoring_traces(model: HazardEnsemble, episodes: Sequence[Episode]) -> list[MonitoringTrace]:
    return [monitoring_trace(model, e) for e in episodes]


def variable_importance(model: HazardEnsemble) -> dict[str, float]:
    """Per-feature sum of split gains, normalized by the maximum.

    Time counts as a feature named "t".  An ensemble with no splits maps
    every feature to 0.
    """
    names = (TIME_FEATURE_NAME,) + model.schema.feature_names
    gains = np.zeros(len(names))
    for tree in model.trees:
        for node in _walk(tree):
            if not node.is_leaf:
                gains[node.feature] += node.gain
    top = gains.max()
    if top > 0:
        gains = gains / top
    return dict(zip(names, gains.tolist()))


# ---------------------------------------------------------------------------
# training


def _weighted_value_thresholds(values: np.ndarray, weights: np.ndarray, max_bins: int) -> np.ndarray:
    """Candidate split thresholds for one covariate.

    All distinct observed values (minus the smallest, which splits nothing)
    when few; otherwise exposure-weighted quantile cuts.
    """
    mask = np.isfinite(values)
    v, w = values[mask], weights[mask]
    if v.size == 0:
        return np.empty(0)
    uv, inv = np.unique(v, return_inverse=True)
    if uv.size < 2:
        return np.empty(0)
    if uv.size <= max_bins:
        return uv[1:].copy()
    cum = np.cumsum(np.bincount(inv, weights=w, minlength=uv.size))
    targets = cum[-1] * np.arange(1, max_bins) / max_bins
    idx = np.clip(np.searchsorted(cum, targets, side="left"), 0, uv.size - 1)
    thr = np.unique(uv[idx])
    return thr[thr > uv[0]]


def _exposure_time_thresholds(starts: np.ndarray, ends: np.ndarray, max_bins: int) -> np.ndarray:
    """Quantile cuts of the exposure measure on the time axis.

    The at-risk time forms a density over t (coverage count per segment
    between epoch endpoints); thresholds sit at its 1/max_bins quantiles, so
    time is sketched with the same weighting as any covariate.
    """
    bp = np.unique(np.concatenate([starts, ends]))
    if bp.size < 2:
        return np.empty(0)
    diff = np.zeros(bp.size)
    np.add.at(diff, np.searchsorted(bp, starts), 1.0)
    np.add.at(diff, np.searchsorted(bp, ends), -1.0)
    coverage = np.cumsum(diff)[:-1]
    mass = coverage * np.diff(bp)
    pos = mass > 0
    if not pos.any():
        return np.empty(0)
    seg_lo = bp[:-1][pos]
    seg_cov = coverage[pos]
    cum = np.cumsum(mass[pos])
    targets = cum[-1] * np.arange(1, max_bins) / max_bins
    j = np.clip(np.searchsorted(cum, targets, side="left"), 0, cum.size - 1)
    prev = np.concatenate([[0.0], cum[:-1]])
    tau = seg_lo[j] + (targets - prev[j]) / seg_cov[j]
    tau = np.unique(tau)
    return tau[(tau > bp[0]) & (tau < bp[-1])]


class _TrainingData:
    """Epochs pre-split at every candidate time threshold.

    Fragments are the unit of training: each lies on one side of every
    candidate split, so node membership is a pure bin comparison.
    ``bins[f]`` holds per-fragment bin indices for feature f (0 = time),
    with -1 marking a missing value.
    """

    def __init__(self, episodes: Sequence[Episode], schema: DatasetSchema, config: TrainConfig):
        starts, ends, deltas, X = _episode_arrays(episodes, schema)
        exposure_w = ends - starts
        self.thresholds = [_exposure_time_thresholds(starts, ends, config.max_quantile_bins)]
        for j in range(schema.width):
            self.thresholds.append(
                _weighted_value_thresholds(X[:, j], exposure_w, config.max_quantile_bins)
            )
        t, t_hi, rows, last = _build_pieces(starts, ends, self.thresholds[0])
        self.dt = t_hi - t
        self.delta = np.zeros(t.shape[0])
        self.delta[last[deltas == 1]] = 1.0
        self.n_fragments = t.shape[0]
        self.bins = [np.searchsorted(self.thresholds[0], t, side="right").astype(np.int32)]
        for j in range(schema.width):
            v = X[rows, j]
            b = np.searchsorted(self.thresholds[j + 1], v, side="right").astype(np.int32)
            b[np.isnan(v)] = -1
            self.bins.append(b)


def _split_gain(gl, hl, gr, hr, parent, min_hessian):
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = gl * gl / hl + gr * gr / hr - parent
    gain[(hl < min_hessian) | (hr < min_hessian)] = -np.inf
    return gain


def _best_split(data: _TrainingData, idx: np.ndarray, g: np.ndarray, h: np.ndarray, min_hessian: float):
    """Best (feature, threshold, missing-direction) by second-order gain.

    Ties resolve deterministically: lowest feature index, then lowest
    threshold, and missing-goes-left on equal-direction gains.  Returns None
    when no candidate has positive gain.
    """
    g_node, h_node = g[idx], h[idx]
    g_parent = float(g_node.sum())
    h_parent = float(h_node.sum())
    parent = g_parent * g_parent / h_parent if h_parent > 0 else 0.0
    best = None
    best_gain = 0.0
    for feature, thresholds in enumerate(data.thresholds):
        if thresholds.size == 0:
            continue
        bins = data.bins[feature][idx]
        observed = bins >= 0
        gh = np.bincount(bins[observed], weights=g_node[observed], minlength=thresholds.size + 1)
        hh = np.bincount(bins[observed], weights=h_node[observed], minlength=thresholds.size + 1)
        g_miss = float(g_node[~observed].sum())
        h_miss = float(h_node[~observed].sum())
        gl = np.cumsum(gh)[:-1]
        hl = np.cumsum(hh)[:-1]
        gr = gh.sum() - gl
        hr = hh.sum() - hl
        gain_left = _split_gain(gl + g_miss, hl + h_miss, gr, hr, parent, min_hessian)
        gain_right = _split_gain(gl, hl, gr + g_miss, hr + h_miss, parent, min_hessian)
        use_left = gain_left >= gain_right
        gains = np.where(use_left, gain_left, gain_right)
        k = int(np.argmax(gains))
        if gains[k] > best_gain:
            best_gain = float(gains[k])
            best = (feature, k, float(data.thresholds[feature][k]), bool(use_left[k]), best_gain)
    return best


def _goes_left(data: _TrainingData, idx: np.ndarray, feature: int, k: int, missing_left: bool) -> np.ndarray:
    bins = data.bins[feature][idx]
    return np.where(bins >= 0, bins <= k, missing_left)


def _leaf_value(d_sum: float, h_sum: float, clamp: float) -> float:
    if d_sum <= 0:
        return -clamp
    return min(max(math.log(d_sum / h_sum), -clamp), clamp)


def _grow_tree(data: _TrainingData, F: np.ndarray, config: TrainConfig) -> TreeNode:
    """Grow one depth-limited tree and apply its nu-scaled leaves to F."""
    w = np.exp(F) * data.dt
    g = w - data.delta
    h = w

    def build(idx: np.ndarray, depth: int) -> TreeNode:
        if depth < config.max_depth and idx.size >= 2:
            found = _best_split(data, idx, g, h, config.min_hessian_per_leaf)
            if found is not None:
                feature, k, threshold, missing_left, gain = found
                left_mask = _goes_left(data, idx, feature, k, missing_left)
                return TreeNode.split(
                    feature,
                    threshold,
                    missing_left,
                    gain,
                    build(idx[left_mask], depth + 1),
                    build(idx[~left_mask], depth + 1),
                )
        value = _leaf_value(float(data.delta[idx].sum()), float(h[idx].sum()), config.leaf_value_clamp)
        F[idx] += config.nu * value
        return TreeNode.leaf(value)

    return build(np.arange(data.n_fragments), 0)


def _training_nll(data: _TrainingData, F: np.ndarray) -> float:
    events = data.delta == 1.0
    return float(np.sum(np.exp(F) * data.dt)) - float(np.sum(F[events]))


def train(episodes: Sequence[Episode], schema: DatasetSchema, config: TrainConfig) -> HazardEnsemble:
    """Fit the boosted hazard ensemble.

    Deterministic: identical data and config produce an identical model.
    Raises ``DegenerateData`` when the data has no events, and ``ValueError``
    on invalid episodes.
    """
    check_episodes(episodes, schema)
    f0 = fit_f0(episodes)
    data = _TrainingData(episodes, schema, config)
    F = np.full(data.n_fragments, f0)
    nll_path = [_training_nll(data, F)]
    trees = []
    for _ in range(config.num_trees):
        trees.append(_grow_tree(data, F, config))
        nll_path.append(_training_nll(data, F))
    return HazardEnsemble.from_trees(f0, config.nu, trees, schema, nll_path)


class HazardBooster(BaseEstimator):
    """Scikit-learn style front end for the boosted hazard model.

    Parameters mirror :class:`TrainConfig`; ``fit`` takes a sequence of
    episodes plus their schema instead of an (X, y) pair, since the data is
    a set of exposure intervals rather than a flat matrix.

    >>> model = HazardBooster(n_trees=50, max_depth=1).fit(episodes, schema)
    >>> model.predict_hazard(36.0, x)
    """

    def __init__(
        self,
        n_trees: int = 100,
        max_depth: int = 2,
        nu: float = 0.1,
        max_quantile_bins: int = 256,
        min_hessian_per_leaf: float = 1e-6,
        leaf_value_clamp: float = 5.0,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.nu = nu
        self.max_quantile_bins = max_quantile_bins
        self.min_hessian_per_leaf = min_hessian_per_leaf
        self.leaf_value_clamp = leaf_value_clamp

    def _config(self) -> TrainConfig:
        return TrainConfig(
            max_depth=self.max_depth,
            num_trees=self.n_trees,
            nu=self.nu,
            max_quantile_bins=self.max_quantile_bins,
            min_hessian_per_leaf=self.min_hessian_per_leaf,
            leaf_value_clamp=self.leaf_value_clamp,
        )

    def fit(self, episodes: Sequence[Episode], schema: DatasetSchema) -> "HazardBooster":
        self.ensemble_ = train(episodes, schema, self._config())
        self.schema_ = schema
        self.f0_ = self.ensemble_.f0
        self.train_nll_path_ = np.array(self.ensemble_.train_nll_path)
        importance = variable_importance(self.ensemble_)
        names = (TIME_FEATURE_NAME,) + schema.feature_names
        self.feature_importances_ = np.array([importance[n] for n in names])
        return self

    def _check_fitted(self):
        if not hasattr(self, "ensemble_"):
            raise NotFittedError("HazardBooster is not fitted; call fit first")

    def predict_hazard(self, t: float, x) -> float:
        self._check_fitted()
        return hazard(self.ensemble_, t, x)

    def predict_survival(self, episode: Episode, t: float) -> float:
        self._check_fitted()
        return survival(self.ensemble_, episode, t)

    def predict_traces(self, episodes: Sequence[Episode]) -> list[MonitoringTrace]:
        self._check_fitted()
        return monitoring_traces(self.ensemble_, episodes)

    def score(self, episodes: Sequence[Episode], y=None) -> float:
        """Negative held-out NLL per exposure hour (greater is better)."""
        self._check_fitted()
        return -neg_log_likelihood(self.ensemble_, episodes) / total_exposure(episodes)
