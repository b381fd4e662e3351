"""Per-site variable importance and federated rank aggregation.

Only integer ranks leave a site; raw importances stay local.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import SiteDataset
from .errors import DataError, SingleClassError
from .forest import ForestParams, RandomForest


@dataclass(frozen=True)
class LocalRanking:
    site_id: int
    ranks: dict[str, int]
    importances: dict[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if sorted(self.ranks.values()) != list(range(1, len(self.ranks) + 1)):
            raise DataError("ranks must be a permutation of 1..P")

    def to_json(self) -> str:
        payload = {"site_id": self.site_id, "ranks": dict(sorted(self.ranks.items()))}
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "LocalRanking":
        d = json.loads(text)
        return cls(int(d["site_id"]), {k: int(v) for k, v in d["ranks"].items()})


@dataclass(frozen=True)
class GlobalRanking:
    weighted_sums: dict[str, float]
    global_ranks: dict[str, int]

    @property
    def ordered(self) -> list[str]:
        """Variable names from most to least important."""
        return sorted(self.global_ranks, key=self.global_ranks.get)

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "weighted_sums": dict(sorted(self.weighted_sums.items())),
            "global_ranks": dict(sorted(self.global_ranks.items())),
            "ordered": self.ordered,
        }


def ranks_from_scores(scores: dict[str, float]) -> dict[str, int]:
    """Rank 1 for the highest score; ties broken by ascending name."""
    order = sorted(scores, key=lambda name: (-scores[name], name))
    return {name: r for r, name in enumerate(order, start=1)}


def forest_matrix(data: SiteDataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Numeric matrix for the forest: categories become their schema index."""
    cols, is_cat, n_cat = [], [], []
    for v in data.schema.variables:
        col = data.columns[v.name]
        if v.is_categorical:
            lookup = {c: i for i, c in enumerate(v.categories)}
            cols.append(np.array([lookup[c] for c in col], dtype=np.float64))
            n_cat.append(len(v.categories))
        else:
            cols.append(col.astype(np.float64))
            n_cat.append(0)
        is_cat.append(v.is_categorical)
    return np.column_stack(cols), np.array(is_cat), np.array(n_cat)


def forest_importance(
    data: SiteDataset, params: ForestParams | None = None, seed: int = 0
) -> LocalRanking:
    """Rank a site's variables by random-forest Gini importance on its train rows."""
    train = data.rows("train")
    if train.n < 10:
        raise DataError(f"site {data.site_id}: need at least 10 training rows, got {train.n}")
    pos = int(train.outcome.sum())
    if pos == 0 or pos == train.n:
        raise SingleClassError(f"site {data.site_id}: training outcome has a single class")
    X, is_cat, n_cat = forest_matrix(train)
    forest = RandomForest(params or ForestParams(), seed=seed)
    forest.fit(X, train.outcome, is_cat, n_cat)
    imp = {name: float(v) for name, v in zip(data.schema.names, forest.feature_importances_)}
    return LocalRanking(data.site_id, ranks_from_scores(imp), imp)


def aggregate_rankings(locals_: Sequence[LocalRanking], weights) -> GlobalRanking:
    """Sort variables by the weighted sum of their site ranks."""
    if not locals_:
        raise DataError("no local rankings to aggregate")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(locals_),):
        raise DataError("one weight per local ranking is required")
    names = set(locals_[0].ranks)
    for lr in locals_[1:]:
        if set(lr.ranks) != names:
            raise DataError(f"site {lr.site_id} ranks a different variable set")
    # fsum makes the sums independent of site order
    sums = {n: math.fsum(float(wj) * lr.ranks[n] for wj, lr in zip(w, locals_)) for n in names}
    order = sorted(names, key=lambda n: (sums[n], n))
    return GlobalRanking(sums, {n: r for r, n in enumerate(order, start=1)})
