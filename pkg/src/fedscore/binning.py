"""Quantile discretization of continuous variables, locally and federated.

What a site shares for binning is a slot-aligned vector of its sample
quantiles per continuous variable, plus category frequencies for
categorical variables that need merging.  Nothing row-level is exchanged.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import ALL, Schema, SiteDataset, VariableSpec
from .errors import ConfigError, DataError

OTHER = "Other"


@dataclass(frozen=True)
class BinningConfig:
    percentiles: tuple[float, ...] = (5.0, 20.0, 80.0, 95.0)
    max_categories: int = 5
    share_grid: float | None = None  # round shared quantiles to this grid; off by default

    def __post_init__(self):
        p = tuple(float(x) for x in self.percentiles)
        object.__setattr__(self, "percentiles", p)
        if not p or any(not 0 < x < 100 for x in p) or any(a >= b for a, b in zip(p, p[1:])):
            raise ConfigError("percentiles must be strictly increasing inside (0, 100)")
        if self.max_categories < 2:
            raise ConfigError("max_categories must be >= 2")
        if self.share_grid is not None and not self.share_grid > 0:
            raise ConfigError("share_grid must be positive")


def type7_quantile(values, probs) -> np.ndarray:
    """Sample quantiles by linear interpolation of order statistics (type 7)."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.shape[0]
    if n == 0:
        raise DataError("quantile of an empty vector")
    out = np.empty(len(probs))
    for i, p in enumerate(probs):
        h = (n - 1) * p
        lo = math.floor(h)
        hi = min(lo + 1, n - 1)
        out[i] = x[lo] + (h - lo) * (x[hi] - x[lo])
    return out


def collapse(cutoffs: Sequence[float | None]) -> tuple[float, ...]:
    """Drop missing slots and duplicates, returning a strictly increasing tuple."""
    vals = sorted(float(c) for c in cutoffs if c is not None)
    out: list[float] = []
    for c in vals:
        if not out or c > out[-1]:
            out.append(c)
    return tuple(out)


def cap_cutoffs(cutoffs: Sequence[float], max_categories: int) -> tuple[float, ...]:
    """Merge neighbouring bins until at most ``max_categories`` remain.

    The narrowest interior bin is folded into the bin above it, repeatedly.
    """
    cuts = list(cutoffs)
    while len(cuts) + 1 > max_categories:
        i = int(np.argmin(np.diff(cuts)))
        del cuts[i + 1]
    return tuple(cuts)


@dataclass(frozen=True)
class CutoffSet:
    """Interior cutoffs per continuous variable, plus kept labels for merged categoricals."""

    cutoffs: dict[str, tuple[float, ...]]
    kept_categories: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for name, c in self.cutoffs.items():
            c = tuple(float(x) for x in c)
            if any(a >= b for a, b in zip(c, c[1:])):
                raise DataError(f"cutoffs for {name!r} must be strictly increasing")
            self.cutoffs[name] = c

    def n_categories(self, name: str) -> int:
        return len(self.cutoffs[name]) + 1

    def to_dict(self) -> dict:
        d = {name: list(c) for name, c in sorted(self.cutoffs.items())}
        if self.kept_categories:
            d = {"cutoffs": d, "kept_categories": {k: list(v) for k, v in sorted(self.kept_categories.items())}}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "CutoffSet":
        if "cutoffs" in d and isinstance(d["cutoffs"], dict):
            kept = {k: tuple(v) for k, v in d.get("kept_categories", {}).items()}
            return cls({k: tuple(v) for k, v in d["cutoffs"].items()}, kept)
        return cls({k: tuple(v) for k, v in d.items()})


def _continuous(schema: Schema) -> list[str]:
    return [v.name for v in schema.variables if not v.is_categorical]


def cutoff_payload(data: SiteDataset, config: BinningConfig | None = None) -> dict[str, list[float | None]]:
    """Slot-aligned sample quantiles each site shares for federation.

    A slot is ``None`` when the quantile equals the site's minimum value,
    since such a cutoff would only create an empty lowest bin.
    """
    config = config or BinningConfig()
    train = data.rows("train")
    probs = [p / 100.0 for p in config.percentiles]
    out: dict[str, list[float | None]] = {}
    for name in _continuous(data.schema):
        col = train.columns[name]
        q = type7_quantile(col, probs)
        if config.share_grid is not None:
            q = np.round(q / config.share_grid) * config.share_grid
        lo = col.min()
        out[name] = [None if v <= lo else float(v) for v in q]
    return out


def local_cutoffs(data: SiteDataset, config: BinningConfig | None = None) -> CutoffSet:
    """Cutoffs a single site would use on its own training rows."""
    config = config or BinningConfig()
    payload = cutoff_payload(data, config)
    cuts = {name: cap_cutoffs(collapse(q), config.max_categories) for name, q in payload.items()}
    kept = federate_category_merges([category_frequencies(data)], [1.0], data.schema, config)
    return CutoffSet(cuts, kept)


def federate_cutoffs(payloads: Sequence[Mapping[str, Sequence[float | None]]], weights,
                     config: BinningConfig | None = None) -> CutoffSet:
    """Weighted average of site cutoffs, slot by slot.

    Missing (``None``) slots drop out and the remaining weights are
    renormalized for that slot.  Results are then deduplicated and capped.
    """
    config = config or BinningConfig()
    if not payloads:
        raise DataError("no cutoff payloads to federate")
    payloads = [p.cutoffs if isinstance(p, CutoffSet) else p for p in payloads]
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(payloads),):
        raise DataError("one weight per site is required")
    names = list(payloads[0])
    out: dict[str, tuple[float, ...]] = {}
    for name in names:
        vecs = []
        for j, p in enumerate(payloads):
            if name not in p:
                raise DataError(f"variable {name!r} missing from site {j + 1}'s cutoffs")
            vecs.append(list(p[name]))
        L = len(vecs[0])
        if any(len(v) != L for v in vecs):
            raise DataError(
                f"variable {name!r}: cutoff vectors differ in length; send slot-aligned payloads"
            )
        fed: list[float | None] = []
        for i in range(L):
            vals = [(wj, v[i]) for wj, v in zip(w, vecs) if v[i] is not None and wj > 0]
            if not vals:
                fed.append(None)
                continue
            xs = [x for _, x in vals]
            if min(xs) == max(xs):
                fed.append(float(xs[0]))
                continue
            fed.append(math.fsum(wj * x for wj, x in vals) / math.fsum(wj for wj, _ in vals))
        out[name] = cap_cutoffs(collapse(fed), config.max_categories)
    return CutoffSet(out)


def category_frequencies(data: SiteDataset) -> dict[str, dict[str, float]]:
    """Per-category training-row proportions for each categorical variable."""
    train = data.rows("train")
    out = {}
    for v in data.schema.variables:
        if v.is_categorical:
            col = train.columns[v.name]
            out[v.name] = {c: float(np.mean(col == c)) for c in v.categories}
    return out


def federate_category_merges(payloads, weights, schema: Schema,
                             config: BinningConfig | None = None) -> dict[str, tuple[str, ...]]:
    """Labels kept per over-wide categorical variable; the rest fold into "Other"."""
    config = config or BinningConfig()
    w = np.asarray(weights, dtype=np.float64)
    kept = {}
    for v in schema.variables:
        if not v.is_categorical or len(v.categories) <= config.max_categories:
            continue
        freq = {c: math.fsum(wj * p[v.name][c] for wj, p in zip(w, payloads)) for c in v.categories}
        n_keep = config.max_categories - 1
        pool = [c for c in v.categories if c != OTHER]
        order = sorted(pool, key=lambda c: (-freq[c], v.categories.index(c)))
        keep = set(order[:n_keep])
        kept[v.name] = tuple(c for c in v.categories if c in keep and c != OTHER)
    return kept


def _fmt(x: float, digits: int = 17) -> str:
    x = float(f"{x:.{digits}g}")
    if x == 0.0 or 1e-4 <= abs(x) < 1e15:
        return np.format_float_positional(x, trim="-")
    return np.format_float_scientific(x, trim="-")


def interval_labels(cutoffs: Sequence[float]) -> tuple[str, ...]:
    """Labels in scoring-table notation: ``<a``, ``[a,b)``, ``>=b``.

    Cutoffs are shown with the fewest significant digits (4 or more) that
    keep them distinct; the exact values live in the cutoff set.
    """
    if not cutoffs:
        return (ALL,)
    for digits in (4, 6, 8, 12, 17):
        c = [_fmt(x, digits) for x in cutoffs]
        if len(set(c)) == len(c):
            break
    labels = [f"<{c[0]}"]
    labels += [f"[{a},{b})" for a, b in zip(c, c[1:])]
    labels.append(f">={c[-1]}")
    return tuple(labels)


def bin_index(values, cutoffs: Sequence[float]) -> np.ndarray:
    """Interval index with left-closed bins: ``c_i <= v < c_{i+1}`` maps to ``i + 1``."""
    return np.searchsorted(np.asarray(cutoffs, dtype=np.float64), values, side="right")


def transform(data: SiteDataset, cutoffs: CutoffSet) -> SiteDataset:
    """Turn every continuous variable into interval categories."""
    columns = dict(data.columns)
    specs = []
    for v in data.schema.variables:
        if v.is_categorical:
            keep = cutoffs.kept_categories.get(v.name)
            if keep is None:
                specs.append(v)
                continue
            cats = tuple(keep) + (OTHER,)
            col = data.columns[v.name]
            columns[v.name] = np.where(np.isin(col, keep), col, OTHER).astype(str)
            specs.append(VariableSpec(v.name, "categorical", cats, v.forced_include))
            continue
        if v.name not in cutoffs.cutoffs:
            raise DataError(f"no cutoffs for continuous variable {v.name!r}")
        cuts = cutoffs.cutoffs[v.name]
        labels = interval_labels(cuts)
        idx = bin_index(data.columns[v.name], cuts)
        columns[v.name] = np.asarray(labels)[idx]
        specs.append(VariableSpec(v.name, "categorical", labels, v.forced_include))
    schema = Schema(tuple(specs), data.schema.outcome_name)
    return SiteDataset(
        site_id=data.site_id,
        schema=schema,
        columns=columns,
        outcome=data.outcome,
        split=data.split,
        row_ids=data.row_ids,
    )
