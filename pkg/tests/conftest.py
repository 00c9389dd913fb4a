import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hazardforge import DatasetSchema, Epoch, Episode, HazardEnsemble, MonitoringTrace
from hazardforge.boosting import TreeNode


def make_schema(names, kinds=None, start=24.0):
    if kinds is None:
        kinds = ("numeric",) * len(names)
    return DatasetSchema(tuple(names), tuple(kinds), start)


def make_episode(epochs, episode_id="e1", subject_id=None, censored=False):
    """epochs: iterable of (t_start, t_end, covariates, delta)."""
    return Episode(
        episode_id,
        subject_id or episode_id,
        tuple(Epoch(a, b, np.asarray(cov, dtype=float), d) for a, b, cov, d in epochs),
        censored,
    )


def constant_trace(episode_id, rate, start, until, event=None):
    return MonitoringTrace(
        episode_id=episode_id,
        piece_starts=[start],
        piece_ends=[until],
        hazards=[rate],
        first_event_time=event,
        monitored_until=until,
    )


def step_trace(episode_id, pieces, event=None, until=None):
    """pieces: iterable of (start, end, hazard)."""
    starts = [p[0] for p in pieces]
    ends = [p[1] for p in pieces]
    values = [p[2] for p in pieces]
    return MonitoringTrace(
        episode_id=episode_id,
        piece_starts=starts,
        piece_ends=ends,
        hazards=values,
        first_event_time=event,
        monitored_until=until if until is not None else ends[-1],
    )


def random_ensemble(rng, schema, n_trees=3, depth=2, time_range=(24.0, 72.0)):
    """A syntactically valid model with random structure, for integration tests."""

    def build(d):
        if d == 0 or rng.uniform() < 0.25:
            return TreeNode.leaf(rng.uniform(-0.8, 0.8))
        feature = int(rng.integers(0, schema.width + 1))
        if feature == 0:
            threshold = float(rng.uniform(*time_range))
        else:
            threshold = float(rng.uniform(-1.0, 1.0))
        return TreeNode.split(
            feature, threshold, bool(rng.integers(0, 2)), float(rng.uniform(0, 1)), build(d - 1), build(d - 1)
        )

    trees = tuple(build(depth) for _ in range(n_trees))
    return HazardEnsemble.from_trees(float(rng.uniform(-3.0, -0.5)), 0.5, trees, schema)


def random_episode(rng, schema, episode_id="r1", max_epochs=6, with_gaps=True):
    t = schema.monitoring_start
    epochs = []
    for _ in range(int(rng.integers(1, max_epochs + 1))):
        if with_gaps and rng.uniform() < 0.2:
            t += float(rng.uniform(0.5, 3.0))
        length = float(rng.uniform(0.5, 9.0))
        cov = rng.uniform(-1.0, 1.0, schema.width)
        cov[rng.uniform(size=schema.width) < 0.25] = np.nan
        delta = int(rng.uniform() < 0.3)
        epochs.append((t, t + length, cov, delta))
        t += length
    return make_episode(epochs, episode_id=episode_id)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
