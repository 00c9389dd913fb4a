"""Domain types for continuous-time recurrent-event data in long format.

An :class:`Epoch` is one half-open interval ``[t_start, t_end)`` with
constant covariates and an end-of-interval event indicator; an
:class:`Episode` is an ordered, non-overlapping sequence of epochs for one
monitored stay.  All times are hours.  Missing covariate values are NaN,
never silently zero-filled.

Epoch sequences may contain gaps (unmonitored intervals): a gap is valid
data, contributes nothing to exposure, and is skipped by every integral
downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

FEATURE_KINDS = ("numeric", "one_hot", "embedding", "recurrence")


def as_feature_vector(values) -> np.ndarray:
    """Return a read-only float64 1-d array (shared if already in that form)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"covariates must be 1-d, got shape {arr.shape}")
    if arr.flags.writeable or arr is not values:
        arr = arr.copy()
        arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Epoch:
    """One training row: a half-open exposure interval with constant covariates."""

    t_start: float
    t_end: float
    covariates: np.ndarray
    delta: int = 0

    def __post_init__(self):
        object.__setattr__(self, "t_start", float(self.t_start))
        object.__setattr__(self, "t_end", float(self.t_end))
        object.__setattr__(self, "covariates", as_feature_vector(self.covariates))
        object.__setattr__(self, "delta", int(self.delta))

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def width(self) -> int:
        return self.covariates.shape[0]


@dataclass(frozen=True)
class Episode:
    """An ordered sequence of epochs for one monitored stay.

    ``censored_admin`` marks that monitoring ended for a reason unrelated to
    the event (e.g. discharge); it is inert metadata for all estimators.
    """

    episode_id: str
    subject_id: str
    epochs: tuple[Epoch, ...]
    censored_admin: bool = False

    def __post_init__(self):
        object.__setattr__(self, "epochs", tuple(self.epochs))

    @property
    def start(self) -> float:
        return self.epochs[0].t_start

    @property
    def end(self) -> float:
        return self.epochs[-1].t_end

    def event_times(self) -> list[float]:
        return [e.t_end for e in self.epochs if e.delta == 1]

    def first_event_time(self) -> float | None:
        for e in self.epochs:
            if e.delta == 1:
                return e.t_end
        return None


@dataclass(frozen=True)
class DatasetSchema:
    """Feature layout shared by every episode of a dataset.

    Embedding features, when present, must form one contiguous block named
    ``emb0..emb{n-1}`` so stream fusion can address it.
    """

    feature_names: tuple[str, ...]
    feature_kinds: tuple[str, ...]
    monitoring_start: float = 24.0

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "feature_kinds", tuple(self.feature_kinds))
        object.__setattr__(self, "monitoring_start", float(self.monitoring_start))
        if len(self.feature_names) != len(self.feature_kinds):
            raise ValueError("feature_names and feature_kinds lengths differ")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValueError("feature names must be unique")
        for kind in self.feature_kinds:
            if kind not in FEATURE_KINDS:
                raise ValueError(f"unknown feature kind {kind!r}")
        emb = [i for i, k in enumerate(self.feature_kinds) if k == "embedding"]
        if emb:
            lo, hi = emb[0], emb[-1]
            if emb != list(range(lo, hi + 1)):
                raise ValueError("embedding features must be contiguous")
            expected = tuple(f"emb{j}" for j in range(len(emb)))
            if self.feature_names[lo : hi + 1] != expected:
                raise ValueError("embedding features must be named emb0..emb{n-1}")

    @property
    def width(self) -> int:
        return len(self.feature_names)

    def embedding_slice(self) -> slice | None:
        emb = [i for i, k in enumerate(self.feature_kinds) if k == "embedding"]
        if not emb:
            return None
        return slice(emb[0], emb[-1] + 1)

    @property
    def embedding_dim(self) -> int:
        sl = self.embedding_slice()
        return 0 if sl is None else sl.stop - sl.start


@dataclass(frozen=True)
class Violation:
    """One invariant failure found by :func:`validate_episode`."""

    kind: str
    index: int | None
    message: str


def validate_episode(episode: Episode, schema: DatasetSchema) -> list[Violation]:
    """Check every epoch/episode invariant; violations are data, not failures.

    Returns an empty list iff the episode is well formed and all epochs start
    at or after ``schema.monitoring_start``.
    """
    out: list[Violation] = []
    if not episode.epochs:
        return [Violation("empty_episode", None, "episode has no epochs")]
    for i, ep in enumerate(episode.epochs):
        if not (math.isfinite(ep.t_start) and math.isfinite(ep.t_end)):
            out.append(Violation("nonfinite_time", i, f"non-finite bounds [{ep.t_start}, {ep.t_end})"))
            continue
        if not ep.t_start < ep.t_end:
            out.append(Violation("empty_interval", i, f"epoch [{ep.t_start}, {ep.t_end}) has no measure"))
        if ep.t_start < schema.monitoring_start:
            out.append(
                Violation(
                    "before_monitoring_start",
                    i,
                    f"epoch starts at {ep.t_start} before monitoring start {schema.monitoring_start}",
                )
            )
        if ep.width != schema.width:
            out.append(Violation("width_mismatch", i, f"covariate width {ep.width} != schema width {schema.width}"))
        if ep.delta not in (0, 1):
            out.append(Violation("bad_delta", i, f"delta {ep.delta} not in {{0, 1}}"))
        if i > 0 and episode.epochs[i - 1].t_end > ep.t_start:
            out.append(
                Violation(
                    "overlap",
                    i,
                    f"epoch starts at {ep.t_start} before previous epoch ends at {episode.epochs[i - 1].t_end}",
                )
            )
    return out


def check_episodes(episodes: Sequence[Episode], schema: DatasetSchema) -> None:
    """Raise ``ValueError`` describing the first invalid episode, if any."""
    for episode in episodes:
        violations = validate_episode(episode, schema)
        if violations:
            v = violations[0]
            where = f" (epoch {v.index})" if v.index is not None else ""
            raise ValueError(f"episode {episode.episode_id!r}: {v.kind}{where}: {v.message}")


def _contiguous_runs(epochs: Sequence[Epoch]) -> Iterable[tuple[float, float]]:
    run_start = epochs[0].t_start
    run_end = epochs[0].t_end
    for ep in epochs[1:]:
        if ep.t_start == run_end:
            run_end = ep.t_end
        else:
            yield run_start, run_end
            run_start, run_end = ep.t_start, ep.t_end
    yield run_start, run_end


def total_exposure(episodes: Iterable[Episode] | Episode) -> float:
    """Total time at risk, in hours.

    Adjacent epochs sharing an exact boundary are measured as one run, so
    refining an epoch at interior points can never change the result.
    """
    if isinstance(episodes, Episode):
        episodes = [episodes]
    lengths = []
    for episode in episodes:
        if not episode.epochs:
            continue
        lengths.extend(end - start for start, end in _contiguous_runs(episode.epochs))
    return math.fsum(lengths)


def event_count(episodes: Iterable[Episode] | Episode) -> int:
    """Number of events across all epochs (recurrences all counted)."""
    if isinstance(episodes, Episode):
        episodes = [episodes]
    return sum(ep.delta for episode in episodes for ep in episode.epochs)
