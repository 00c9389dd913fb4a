"""Build model-ready episodes from raw streams.

Covers last-observation-carried-forward discretization, recurrence
features, one-hot expansion, and timestamp-based fusion of embedding
streams into tabular episodes.  All functions are pure: inputs are never
mutated, and refining an epoch at interior times never changes the
per-time covariate function or the total exposure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import DatasetSchema, Epoch, Episode
from .errors import EmptyStream, SchemaMismatch

RECURRENCE_FEATURES = ("prior_event_count", "time_since_last_event")


@dataclass(frozen=True)
class EmbeddingStream:
    """Timestamped fixed-width vectors for one episode, e.g. note embeddings."""

    episode_id: str
    times: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != times.shape[0]:
            raise ValueError("vectors must be (n_entries, dim) aligned with times")
        if times.size and not np.all(np.diff(times) > 0):
            raise ValueError("entry timestamps must be strictly increasing")
        if times.size and vectors.shape[1] < 1:
            raise ValueError("vector width must be >= 1")
        for arr, name in ((times, "times"), (vectors, "vectors")):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1] if self.vectors.size else 0

    def latest_at(self, t: float) -> np.ndarray | None:
        """Most recent vector with timestamp <= t, or None before the first entry."""
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        if i < 0:
            return None
        return self.vectors[i]


@dataclass(frozen=True)
class RawObservationStream:
    """Sparse (timestamp, feature, value) observations for one episode."""

    episode_id: str
    entries: tuple[tuple[float, str, object], ...]
    subject_id: str = ""

    def __post_init__(self):
        entries = tuple((float(t), str(f), v) for t, f, v in self.entries)
        times = [t for t, _, _ in entries]
        if times != sorted(times):
            raise ValueError("entries must be sorted by timestamp")
        object.__setattr__(self, "entries", entries)


def split_epoch(epoch: Epoch, cut_times: Sequence[float]) -> list[Epoch]:
    """Split an epoch at the given times (only strictly interior cuts apply).

    Pieces share the covariate vector; the event indicator stays attached to
    the final piece, whose end is the original ``t_end``.
    """
    cuts = sorted({float(t) for t in cut_times if epoch.t_start < t < epoch.t_end})
    if not cuts:
        return [epoch]
    bounds = [epoch.t_start, *cuts, epoch.t_end]
    return [
        Epoch(a, b, epoch.covariates, epoch.delta if b == epoch.t_end else 0)
        for a, b in zip(bounds[:-1], bounds[1:])
    ]


def split_episode(episode: Episode, cut_times: Sequence[float]) -> Episode:
    epochs = [piece for ep in episode.epochs for piece in split_epoch(ep, cut_times)]
    return Episode(episode.episode_id, episode.subject_id, tuple(epochs), episode.censored_admin)


def locf_discretize(
    raw: RawObservationStream,
    grid: float = 1.0,
    monitoring_start: float = 24.0,
    feature_names: Sequence[str] | None = None,
    categories: dict[str, Sequence[str]] | None = None,
) -> tuple[Episode, DatasetSchema]:
    """Discretize a sparse stream onto a regular grid by carrying values forward.

    Each epoch holds, per feature, the most recent observation at or before
    its start; features never observed by then are missing.  The grid runs
    from ``monitoring_start`` through the epoch containing the last
    observation.  Features listed in ``categories`` are one-hot expanded
    (missing label -> missing block, unseen label -> all-zero block).

    Raises ``EmptyStream`` when the stream has no entries.
    """
    if grid <= 0:
        raise ValueError("grid step must be positive")
    if not raw.entries:
        raise EmptyStream(f"no observations for episode {raw.episode_id!r}")
    categories = categories or {}
    if feature_names is None:
        feature_names = list(dict.fromkeys(f for _, f, _ in raw.entries))
    by_feature: dict[str, list[tuple[float, object]]] = {f: [] for f in feature_names}
    for t, f, v in raw.entries:
        if f in by_feature:
            by_feature[f].append((t, v))

    # extend through the first epoch starting at or after the last observation,
    # so every observed value eventually takes effect under the at-start rule
    last_t = raw.entries[-1][0]
    n_epochs = max(0, math.ceil((last_t - monitoring_start) / grid)) + 1

    out_names: list[str] = []
    out_kinds: list[str] = []
    columns: list[tuple[str, str | None, Sequence[str] | None]] = []
    for f in feature_names:
        if f in categories:
            cats = list(categories[f])
            for c in cats:
                out_names.append(f"{f}={c}")
                out_kinds.append("one_hot")
            columns.append((f, "cat", cats))
        else:
            out_names.append(f)
            out_kinds.append("numeric")
            columns.append((f, None, None))
    schema = DatasetSchema(tuple(out_names), tuple(out_kinds), monitoring_start)

    epochs = []
    for k in range(n_epochs):
        t0 = monitoring_start + k * grid
        row: list[float] = []
        for f, tag, cats in columns:
            obs = by_feature[f]
            value: object | None = None
            for t, v in obs:
                if t <= t0:
                    value = v
                else:
                    break
            if tag == "cat":
                if value is None:
                    row.extend([math.nan] * len(cats))
                else:
                    row.extend(one_hot_expand([value], cats)[0])
            else:
                row.append(math.nan if value is None else float(value))
        epochs.append(Epoch(t0, t0 + grid, np.array(row), 0))
    episode = Episode(raw.episode_id, raw.subject_id or raw.episode_id, tuple(epochs))
    return episode, schema


def mark_events(episode: Episode, event_times: Sequence[float]) -> Episode:
    """Split epochs at event times and set delta on pieces ending at an event."""
    times = sorted(set(float(t) for t in event_times))
    split = split_episode(episode, times)
    marked = set(times)
    epochs = [
        Epoch(ep.t_start, ep.t_end, ep.covariates, 1 if ep.t_end in marked else ep.delta)
        for ep in split.epochs
    ]
    return Episode(split.episode_id, split.subject_id, tuple(epochs), split.censored_admin)


def recurrence_schema(schema: DatasetSchema) -> DatasetSchema:
    """Schema with the two recurrence features appended."""
    for name in RECURRENCE_FEATURES:
        if name in schema.feature_names:
            raise SchemaMismatch(f"feature {name!r} already present")
    return DatasetSchema(
        schema.feature_names + RECURRENCE_FEATURES,
        schema.feature_kinds + ("recurrence", "recurrence"),
        schema.monitoring_start,
    )


def add_recurrence_features(episode: Episode, event_times: Sequence[float]) -> Episode:
    """Append prior-event count and time-since-last-event, evaluated at t_start.

    Epochs are split at each event time so both features are constant within
    every epoch; time-since is missing before the first event.
    """
    times = sorted(float(t) for t in event_times)
    split = split_episode(episode, times)
    arr = np.array(times, dtype=np.float64)
    epochs = []
    for ep in split.epochs:
        count = int(np.searchsorted(arr, ep.t_start, side="right"))
        since = ep.t_start - arr[count - 1] if count > 0 else math.nan
        cov = np.concatenate([ep.covariates, [float(count), since]])
        epochs.append(Epoch(ep.t_start, ep.t_end, cov, ep.delta))
    return Episode(split.episode_id, split.subject_id, tuple(epochs), split.censored_admin)


def embedding_schema(schema: DatasetSchema, dim: int) -> DatasetSchema:
    """Schema with a contiguous emb0..emb{dim-1} block appended."""
    if schema.embedding_slice() is not None:
        raise SchemaMismatch("schema already has an embedding block")
    names = schema.feature_names + tuple(f"emb{j}" for j in range(dim))
    kinds = schema.feature_kinds + ("embedding",) * dim
    return DatasetSchema(names, kinds, schema.monitoring_start)


def widen_for_embeddings(episode: Episode, dim: int) -> Episode:
    """Append a missing embedding block of the given width to every epoch."""
    pad = np.full(dim, np.nan)
    epochs = [
        Epoch(ep.t_start, ep.t_end, np.concatenate([ep.covariates, pad]), ep.delta)
        for ep in episode.epochs
    ]
    return Episode(episode.episode_id, episode.subject_id, tuple(epochs), episode.censored_admin)


def fuse_epoch(epoch: Epoch, stream: EmbeddingStream, block: slice) -> list[Epoch]:
    """Split one epoch at note timestamps and fill its embedding block by carry-forward."""
    pieces = split_epoch(epoch, list(stream.times)) if stream.times.size else [epoch]
    out = []
    for piece in pieces:
        latest = stream.latest_at(piece.t_start)
        cov = np.array(piece.covariates)
        cov[block] = np.nan if latest is None else latest
        out.append(Epoch(piece.t_start, piece.t_end, cov, piece.delta))
    return out


def fuse_embeddings(episode: Episode, stream: EmbeddingStream, schema: DatasetSchema) -> Episode:
    """Fill the schema's embedding block from a timestamped stream.

    Epochs are split at each entry timestamp; each resulting epoch carries
    the most recent vector at or before its start (missing before the first
    entry).  Non-embedding features and total exposure are unchanged.

    Raises ``SchemaMismatch`` on width or episode-id inconsistencies.
    """
    block = schema.embedding_slice()
    if block is None:
        raise SchemaMismatch("schema has no embedding block")
    if stream.times.size and stream.dim != schema.embedding_dim:
        raise SchemaMismatch(
            f"stream width {stream.dim} != schema embedding width {schema.embedding_dim}"
        )
    if stream.episode_id != episode.episode_id:
        raise SchemaMismatch(
            f"stream for episode {stream.episode_id!r} applied to {episode.episode_id!r}"
        )
    epochs = [piece for ep in episode.epochs for piece in fuse_epoch(ep, stream, block)]
    return Episode(episode.episode_id, episode.subject_id, tuple(epochs), episode.censored_admin)


def one_hot_expand(values: Sequence[object], categories: Sequence[str]) -> np.ndarray:
    """Expand category labels into indicator columns.

    A missing label (None or NaN) yields an all-missing block; a label not in
    ``categories`` yields an all-zero block so scoring never halts on novel
    categories.
    """
    cats = list(categories)
    out = np.zeros((len(values), len(cats)))
    for i, v in enumerate(values):
        if v is None or (isinstance(v, float) and math.isnan(v)):
            out[i, :] = np.nan
        elif v in cats:
            out[i, cats.index(v)] = 1.0
    return out


class OneHotExpander:
    """Minimal fit/transform wrapper around :func:`one_hot_expand`.

    ``fit`` freezes the category set from training data (sorted for
    determinism); ``transform`` maps labels to indicator rows.
    """

    def __init__(self, categories: Sequence[str] | None = None):
        self.categories = categories

    def fit(self, values: Sequence[object]):
        if self.categories is not None:
            self.categories_ = list(self.categories)
        else:
            seen = {
                v
                for v in values
                if not (v is None or (isinstance(v, float) and math.isnan(v)))
            }
            self.categories_ = sorted(seen)
        return self

    def transform(self, values: Sequence[object]) -> np.ndarray:
        if not hasattr(self, "categories_"):
            raise RuntimeError("OneHotExpander must be fit before transform")
        return one_hot_expand(values, self.categories_)

    def fit_transform(self, values: Sequence[object]) -> np.ndarray:
        return self.fit(values).transform(values)

    def get_params(self, deep: bool = True) -> dict:
        return {"categories": self.categories}

    def set_params(self, **params):
        for k, v in params.items():
            setattr(self, k, v)
        return self
