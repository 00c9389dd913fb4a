"""Cross-validated selection of boosting depth and tree count.

Folds group by subject so no subject spans folds.  Each grid cell is scored
by mean held-out negative log-likelihood per exposure hour; the winner is
the simplest cell within one standard error of the best, ordering
simplicity by fewer trees first, then smaller depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .boosting import TrainConfig, neg_log_likelihood, train
from .data import DatasetSchema, Episode, total_exposure
from .errors import TooFewGroups

DEFAULT_DEPTHS = (1, 2, 3, 4)
DEFAULT_TREE_COUNTS = tuple(range(25, 501, 25))


@dataclass(frozen=True)
class CvGrid:
    depths: tuple[int, ...] = DEFAULT_DEPTHS
    tree_counts: tuple[int, ...] = DEFAULT_TREE_COUNTS

    def __post_init__(self):
        object.__setattr__(self, "depths", tuple(int(d) for d in self.depths))
        object.__setattr__(self, "tree_counts", tuple(int(m) for m in self.tree_counts))
        for name, values in (("depths", self.depths), ("tree_counts", self.tree_counts)):
            if not values:
                raise ValueError(f"{name} must be non-empty")
            if any(v < 1 for v in values):
                raise ValueError(f"{name} must be positive")
            if list(values) != sorted(values):
                raise ValueError(f"{name} must be sorted ascending")


@dataclass(frozen=True)
class CvCell:
    """Held-out score for one (depth, trees) grid cell."""

    depth: int
    trees: int
    mean_nll: float
    se: float
    fold_nlls: tuple[float, ...]


@dataclass(frozen=True)
class CvResult:
    cells: tuple[CvCell, ...]
    selected: tuple[int, int]

    def cell(self, depth: int, trees: int) -> CvCell:
        for c in self.cells:
            if c.depth == depth and c.trees == trees:
                return c
        raise KeyError((depth, trees))


def kfold_split(episodes: Sequence[Episode], k: int, seed: int) -> list[list[Episode]]:
    """Partition episodes into k folds, grouped by subject.

    Deterministic given the seed; fold sizes differ by at most one subject.
    Raises ``TooFewGroups`` when there are fewer subjects than folds.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    subjects = sorted({e.subject_id for e in episodes})
    if len(subjects) < k:
        raise TooFewGroups(f"{len(subjects)} subjects cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    order = [subjects[i] for i in rng.permutation(len(subjects))]
    assignment = {subject: i % k for i, subject in enumerate(order)}
    folds: list[list[Episode]] = [[] for _ in range(k)]
    for episode in episodes:
        folds[assignment[episode.subject_id]].append(episode)
    return folds


def select_one_se(cells: Sequence[CvCell]) -> tuple[int, int]:
    """One-standard-error rule over grid cells.

    Among cells whose mean is within one SE of the best cell's mean, pick
    the simplest: fewest trees, then smallest depth.  Invariant to the order
    cells are listed in.
    """
    best = min(cells, key=lambda c: (c.mean_nll, c.trees, c.depth))
    cutoff = best.mean_nll + best.se
    admissible = [c for c in cells if c.mean_nll <= cutoff]
    chosen = min(admissible, key=lambda c: (c.trees, c.depth))
    return chosen.depth, chosen.trees


def cross_validate(
    episodes: Sequence[Episode],
    schema: DatasetSchema,
    grid: CvGrid,
    k: int = 5,
    seed: int = 0,
    base_config: TrainConfig = TrainConfig(),
) -> CvResult:
    """K-fold scores over the (depth, trees) grid, with one-SE selection.

    One training sweep to max(tree_counts) per (fold, depth) serves every
    tree-count cell of that depth: cell (d, m) is scored on the sweep
    ensemble truncated to its first m trees, which is exactly the model m
    rounds of boosting would produce.
    """
    folds = kfold_split(episodes, k, seed)
    max_trees = max(grid.tree_counts)
    fold_scores: dict[tuple[int, int], list[float]] = {
        (d, m): [] for d in grid.depths for m in grid.tree_counts
    }
    for i in range(k):
        held_out = folds[i]
        training = [e for j in range(k) if j != i for e in folds[j]]
        held_out_hours = total_exposure(held_out)
        for depth in grid.depths:
            config = replace(base_config, max_depth=depth, num_trees=max_trees)
            sweep = train(training, schema, config)
            for m in grid.tree_counts:
                nll = neg_log_likelihood(sweep.prefix(m), held_out)
                fold_scores[(depth, m)].append(nll / held_out_hours)

    cells = []
    for depth in grid.depths:
        for m in grid.tree_counts:
            values = fold_scores[(depth, m)]
            mean = float(np.mean(values))
            se = float(np.std(values, ddof=1)) / math.sqrt(k) if k > 1 else 0.0
            cells.append(CvCell(depth, m, mean, se, tuple(values)))
    return CvResult(tuple(cells), select_one_se(cells))
