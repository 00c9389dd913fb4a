"""Synthetic cohorts with a known ground-truth hazard.

Recurrent event times are drawn by thinning a homogeneous Poisson process
at the declared rate bound (candidates accepted with probability
``true_rate / bound``), which is exact for any bounded piecewise-constant
hazard over time and covariates.  Covariates follow piecewise-constant
latent paths; some may be hidden from the tabular output and surface only
through a noisy, sparsely timestamped embedding stream, which is how the
multimodal path is exercised without any language model.

Generation is reproducible: each episode derives its own RNG stream from
(seed, episode index), so parallelism cannot change the output.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import DatasetSchema, Episode, Epoch
from .errors import RateBoundViolated
from .fusion import EmbeddingStream, add_recurrence_features, recurrence_schema
from .metrics import DEFAULT_TIME_BINS, MonitoringTrace, auct, episode_score, roc_pr_curves

THREADS_ENV = "HAZARDFORGE_THREADS"


def _max_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _draw(rng: np.random.Generator, dist: Sequence) -> float:
    kind = dist[0]
    if kind == "constant":
        return float(dist[1])
    if kind == "normal":
        return float(rng.normal(dist[1], dist[2]))
    if kind == "uniform":
        return float(rng.uniform(dist[1], dist[2]))
    if kind == "bernoulli":
        return float(rng.uniform() < dist[1])
    if kind == "choice":
        values, probs = dist[1], dist[2]
        return float(values[rng.choice(len(values), p=probs)])
    raise ValueError(f"unknown distribution {dist!r}")


@dataclass(frozen=True)
class FeatureSpec:
    """One latent covariate process.

    Default behaviour is a piecewise-constant refresh process: an initial
    draw, then redraws on a Poisson clock.  Setting ``onset_rate`` makes it
    a one-way 0 -> 1 switch instead.  Unobserved features drive the hazard
    but never appear in the tabular output.
    """

    name: str
    init: tuple = ("constant", 0.0)
    refresh_rate: float = 0.0
    redraw: tuple | None = None
    onset_rate: float | None = None
    observed: bool = True

    def sample_path(self, rng, t_start, t_end):
        if self.onset_rate is not None:
            times, values = [t_start], [0.0]
            if self.onset_rate > 0:
                onset = t_start + rng.exponential(1.0 / self.onset_rate)
                if onset < t_end:
                    times.append(onset)
                    values.append(1.0)
            return np.array(times), np.array(values)
        times, values = [t_start], [_draw(rng, self.init)]
        if self.refresh_rate > 0:
            t = t_start
            redraw = self.redraw if self.redraw is not None else self.init
            while True:
                t += rng.exponential(1.0 / self.refresh_rate)
                if t >= t_end:
                    break
                times.append(t)
                values.append(_draw(rng, redraw))
        return np.array(times), np.array(values)


@dataclass(frozen=True)
class EmbeddingChannelSpec:
    """Noisy timestamped emission of one latent feature as an n-vector.

    Notes arrive on a Poisson clock; each carries
    ``loading * latent_value + noise``.  The default loading puts the signal
    on coordinate 0 only.
    """

    source: str
    dim: int = 2
    rate: float = 0.25
    noise_sd: float = 0.1
    loading: tuple[float, ...] | None = None

    def loading_vector(self) -> np.ndarray:
        if self.loading is not None:
            if len(self.loading) != self.dim:
                raise ValueError("loading length must equal dim")
            return np.array(self.loading, dtype=np.float64)
        vec = np.zeros(self.dim)
        vec[0] = 1.0
        return vec


@dataclass(frozen=True)
class ConstantHazard:
    rate: float

    def value(self, t, latent):
        return self.rate

    def time_points(self):
        return ()

    def features(self):
        return ()


@dataclass(frozen=True)
class FeatureStepHazard:
    """Rate `low` while the feature is below the threshold, `high` at or above."""

    feature: str
    threshold: float
    low: float
    high: float

    def value(self, t, latent):
        return self.low if latent[self.feature] < self.threshold else self.high

    def time_points(self):
        return ()

    def features(self):
        return (self.feature,)


@dataclass(frozen=True)
class TimeStepHazard:
    at: float
    before: float
    after: float

    def value(self, t, latent):
        return self.before if t < self.at else self.after

    def time_points(self):
        return (self.at,)

    def features(self):
        return ()


@dataclass(frozen=True)
class ProductHazard:
    terms: tuple

    def value(self, t, latent):
        out = 1.0
        for term in self.terms:
            out *= term.value(t, latent)
        return out

    def time_points(self):
        return tuple(p for term in self.terms for p in term.time_points())

    def features(self):
        return tuple(f for term in self.terms for f in term.features())


@dataclass(frozen=True)
class ScenarioSpec:
    """Declarative description of a synthetic cohort.

    ``max_follow_up`` is the monitored window length in hours; monitoring
    runs on [monitoring_start, monitoring_start + max_follow_up), cut short
    per ``censor_rate`` (the rate of an independent exponential censoring
    clock).  ``prevalence_target``, when set on a constant-hazard scenario,
    overrides the rate so the expected share of episodes with at least one
    event hits the target.
    """

    hazard: object
    features: tuple[FeatureSpec, ...] = ()
    lambda_max: float = 1.0
    n_episodes: int = 100
    max_follow_up: float = 48.0
    censor_rate: float = 0.0
    monitoring_start: float = 24.0
    prevalence_target: float | None = None
    embedding: EmbeddingChannelSpec | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if self.lambda_max <= 0:
            raise ValueError("lambda_max must be positive")
        if self.max_follow_up <= 0:
            raise ValueError("max_follow_up must be positive")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        for needed in self.hazard.features():
            if needed not in names:
                raise ValueError(f"hazard references unknown feature {needed!r}")
        if self.embedding is not None and self.embedding.source not in names:
            raise ValueError(f"embedding source {self.embedding.source!r} is not a feature")

    def effective(self) -> tuple[object, float]:
        """Hazard and bound after applying any prevalence target."""
        if self.prevalence_target is None:
            return self.hazard, self.lambda_max
        if not isinstance(self.hazard, ConstantHazard):
            raise ValueError("prevalence_target requires a constant hazard")
        if self.censor_rate > 0:
            raise ValueError("prevalence_target requires censor_rate = 0")
        rate = -math.log(1.0 - self.prevalence_target) / self.max_follow_up
        return ConstantHazard(rate), rate


@dataclass(frozen=True, eq=False)
class _EpisodeTruth:
    paths: dict
    events: tuple[float, ...]
    start: float
    end: float


class GroundTruth:
    """Exact access to the generating hazard, per episode."""

    def __init__(self, hazard, lambda_max: float, records: dict[str, _EpisodeTruth]):
        self.hazard_spec = hazard
        self.lambda_max = lambda_max
        self._records = records

    def _latent(self, record: _EpisodeTruth, t: float) -> dict[str, float]:
        out = {}
        for name, (times, values) in record.paths.items():
            i = int(np.searchsorted(times, t, side="right")) - 1
            out[name] = float(values[max(i, 0)])
        return out

    def hazard_value(self, episode_id: str, t: float) -> float:
        record = self._records[episode_id]
        lam = self.hazard_spec.value(t, self._latent(record, t))
        if lam > self.lambda_max * (1.0 + 1e-9):
            raise RateBoundViolated(f"hazard {lam} exceeds declared bound {self.lambda_max}")
        return lam

    def _breakpoints(self, record: _EpisodeTruth) -> np.ndarray:
        pts = {record.start, record.end}
        pts.update(p for p in self.hazard_spec.time_points() if record.start < p < record.end)
        for times, _ in record.paths.values():
            pts.update(t for t in times.tolist() if record.start < t < record.end)
        return np.array(sorted(pts))

    def trace(self, episode_id: str) -> MonitoringTrace:
        """The true-hazard trajectory, as a step function (exact)."""
        record = self._records[episode_id]
        bp = self._breakpoints(record)
        values = np.array([self.hazard_value(episode_id, t) for t in bp[:-1]])
        return MonitoringTrace(
            episode_id=episode_id,
            piece_starts=bp[:-1],
            piece_ends=bp[1:],
            hazards=values,
            first_event_time=record.events[0] if record.events else None,
            monitored_until=record.end,
        )

    def cumulative_hazard(self, episode_id: str, a: float, b: float) -> float:
        """Integral of the true hazard over [a, b), exact."""
        record = self._records[episode_id]
        bp = self._breakpoints(record)
        lo = np.clip(np.maximum(bp[:-1], a), None, b)
        hi = np.clip(np.minimum(bp[1:], b), a, None)
        total = 0.0
        for s, e in zip(np.maximum(bp[:-1], a), np.minimum(bp[1:], b)):
            if e > s:
                total += self.hazard_value(episode_id, s) * (e - s)
        return total

    def nll(self, episode_ids: Sequence[str] | None = None) -> float:
        """Counting-process NLL of the data under the true hazard."""
        ids = list(self._records) if episode_ids is None else list(episode_ids)
        total = 0.0
        for episode_id in ids:
            record = self._records[episode_id]
            total += self.cumulative_hazard(episode_id, record.start, record.end)
            for t in record.events:
                total -= math.log(self.hazard_value(episode_id, t))
        return total


@dataclass(frozen=True, eq=False)
class SimulatedCohort:
    episodes: tuple[Episode, ...]
    schema: DatasetSchema
    streams: dict[str, EmbeddingStream]
    truth: GroundTruth
    spec: ScenarioSpec


def _simulate_episode(spec: ScenarioSpec, hazard, lambda_max: float, index: int):
    rng = np.random.default_rng([spec.seed, index])
    episode_id = f"ep{index:05d}"
    start = spec.monitoring_start
    end = start + spec.max_follow_up
    if spec.censor_rate > 0:
        end = min(end, start + rng.exponential(1.0 / spec.censor_rate))

    paths = {f.name: f.sample_path(rng, start, end) for f in spec.features}

    def latent_at(t: float) -> dict[str, float]:
        out = {}
        for name, (times, values) in paths.items():
            i = int(np.searchsorted(times, t, side="right")) - 1
            out[name] = float(values[max(i, 0)])
        return out

    events = []
    t = start
    while True:
        t += rng.exponential(1.0 / lambda_max)
        if t >= end:
            break
        lam = hazard.value(t, latent_at(t))
        if lam > lambda_max * (1.0 + 1e-9):
            raise RateBoundViolated(f"hazard {lam} exceeds declared bound {lambda_max}")
        if rng.uniform() * lambda_max <= lam:
            events.append(t)

    bounds = {start, end}
    bounds.update(p for p in hazard.time_points() if start < p < end)
    for name, (times, values) in paths.items():
        bounds.update(x for x in times.tolist() if start < x < end)
    bounds.update(events)
    bounds = sorted(bounds)
    event_set = set(events)
    observed = [f.name for f in spec.features if f.observed]
    epochs = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        latent = latent_at(a)
        cov = np.array([latent[name] for name in observed])
        epochs.append(Epoch(a, b, cov, 1 if b in event_set else 0))
    episode = Episode(episode_id, f"subj{index:05d}", tuple(epochs), censored_admin=True)
    episode = add_recurrence_features(episode, events)

    stream = None
    if spec.embedding is not None:
        ch = spec.embedding
        loading = ch.loading_vector()
        note_times, note_vecs = [], []
        t = start
        while ch.rate > 0:
            t += rng.exponential(1.0 / ch.rate)
            if t >= end:
                break
            signal = latent_at(t)[ch.source]
            note_times.append(t)
            note_vecs.append(signal * loading + rng.normal(0.0, ch.noise_sd, ch.dim))
        stream = EmbeddingStream(
            episode_id,
            np.array(note_times),
            np.array(note_vecs) if note_vecs else np.empty((0, ch.dim)),
        )

    record = _EpisodeTruth(paths=paths, events=tuple(events), start=start, end=end)
    return episode, stream, record


def simulate(spec: ScenarioSpec) -> SimulatedCohort:
    """Generate a cohort; same seed gives byte-identical output.

    Raises ``RateBoundViolated`` if the true hazard ever exceeds its
    declared bound.
    """
    hazard, lambda_max = spec.effective()
    workers = _max_workers()
    indices = range(spec.n_episodes)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda i: _simulate_episode(spec, hazard, lambda_max, i), indices))
    else:
        results = [_simulate_episode(spec, hazard, lambda_max, i) for i in indices]

    episodes = tuple(r[0] for r in results)
    streams = {r[1].episode_id: r[1] for r in results if r[1] is not None}
    records = {r[0].episode_id: r[2] for r in results}

    names = tuple(f.name for f in spec.features if f.observed)
    schema = recurrence_schema(
        DatasetSchema(names, ("numeric",) * len(names), spec.monitoring_start)
    )
    truth = GroundTruth(hazard, lambda_max, records)
    return SimulatedCohort(episodes, schema, streams, truth, spec)


def oracle_metrics(cohort: SimulatedCohort, bins=DEFAULT_TIME_BINS) -> dict:
    """The evaluation battery run with the true hazard in place of a model.

    This is the ceiling any estimator on the same data is benchmarked
    against.
    """
    traces = [cohort.truth.trace(e.episode_id) for e in cohort.episodes]
    outcomes = [episode_score(t) for t in traces]
    curves = roc_pr_curves(outcomes)
    return {
        "auroc": curves.auroc,
        "auc_pr": curves.auc_pr,
        "auct_bins": auct(traces, bins),
    }
