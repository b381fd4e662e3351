"""Tabular datasets, schemas, site partitioning and synthetic cohorts.

Randomness everywhere in the package comes from numpy's ``PCG64`` bit
generator (``np.random.default_rng``), seeded explicitly.  Child streams are
derived with ``np.random.SeedSequence`` so that every randomized step is a
pure function of its inputs and the master seed.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

SPLITS = ("train", "validation", "test")
SPLIT_COLUMN = "split"
ALL = "all"  # sole level of a variable binned without cutoffs
MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none"})


@dataclass(frozen=True)
class VariableSpec:
    name: str
    kind: str  # "continuous" | "categorical"
    categories: tuple[str, ...] = ()
    forced_include: bool = False

    def __post_init__(self):
        if not self.name or not isinstance(self.name, str):
            raise ConfigError("variable name must be a non-empty string")
        if self.kind not in ("continuous", "categorical"):
            raise ConfigError(f"variable {self.name!r}: unknown kind {self.kind!r}")
        cats = tuple(str(c) for c in self.categories)
        object.__setattr__(self, "categories", cats)
        if self.kind == "categorical":
            if cats == (ALL,):
                pass
            elif len(set(cats)) < 2 or len(set(cats)) != len(cats):
                raise ConfigError(
                    f"variable {self.name!r}: categorical needs >= 2 distinct labels"
                )
        elif cats:
            raise ConfigError(f"variable {self.name!r}: continuous takes no categories")

    @property
    def is_categorical(self) -> bool:
        return self.kind == "categorical"

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.categories:
            d["categories"] = list(self.categories)
        if self.forced_include:
            d["forced_include"] = True
        return d


@dataclass(frozen=True)
class Schema:
    variables: tuple[VariableSpec, ...]
    outcome_name: str

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        names = [v.name for v in self.variables]
        if not names:
            raise ConfigError("schema needs at least one predictor")
        if len(set(names)) != len(names):
            raise ConfigError("predictor names must be unique")
        if self.outcome_name in names:
            raise ConfigError("outcome name clashes with a predictor")
        if self.outcome_name == SPLIT_COLUMN or SPLIT_COLUMN in names:
            raise ConfigError(f"{SPLIT_COLUMN!r} is a reserved column name")

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def P(self) -> int:
        return len(self.variables)

    def __getitem__(self, name: str) -> VariableSpec:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    @property
    def forced(self) -> list[str]:
        return [v.name for v in self.variables if v.forced_include]

    def with_variable(self, spec: VariableSpec) -> "Schema":
        vs = tuple(spec if v.name == spec.name else v for v in self.variables)
        return Schema(vs, self.outcome_name)

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "outcome": self.outcome_name,
            "variables": [v.to_dict() for v in self.variables],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        try:
            variables = tuple(
                VariableSpec(
                    name=v["name"],
                    kind=v["kind"],
                    categories=tuple(v.get("categories", ())),
                    forced_include=bool(v.get("forced_include", False)),
                )
                for v in d["variables"]
            )
            return cls(variables, d["outcome"])
        except KeyError as exc:
            raise ConfigError(f"schema missing field {exc}") from None


def load_schema(path) -> Schema:
    with open(path, encoding="utf-8") as fh:
        return Schema.from_dict(json.load(fh))


def save_schema(schema: Schema, path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")


@dataclass
class SiteDataset:
    """Rows held by one site.

    ``columns`` maps each predictor to a 1-d array: float64 for continuous
    variables, unicode labels for categorical ones.  ``row_ids`` track the
    originating row of the pooled source so partitions can be audited.
    """

    site_id: int
    schema: Schema
    columns: dict[str, np.ndarray]
    outcome: np.ndarray
    split: np.ndarray | None = None
    row_ids: np.ndarray | None = None
    excluded_missing: int = 0

    def __post_init__(self):
        if self.site_id < 1:
            raise DataError("site_id must be >= 1")
        self.outcome = np.asarray(self.outcome, dtype=np.int8)
        n = self.outcome.shape[0]
        if n < 1:
            raise DataError("dataset must contain at least one row")
        if not np.isin(self.outcome, (0, 1)).all():
            raise DataError("outcome must be coded 0/1")
        for v in self.schema.variables:
            if v.name not in self.columns:
                raise DataError(f"missing column {v.name!r}")
            col = self.columns[v.name]
            if col.shape != (n,):
                raise DataError(f"column {v.name!r} has wrong length")
            if v.is_categorical:
                bad = ~np.isin(col, np.array(v.categories))
                if bad.any():
                    raise DataError(
                        f"column {v.name!r}: label {col[bad][0]!r} not in {list(v.categories)}"
                    )
            elif not np.isfinite(col).all():
                raise DataError(f"column {v.name!r}: non-finite values")
        if self.split is not None:
            self.split = np.asarray(self.split, dtype="<U10")
            if self.split.shape != (n,) or not np.isin(self.split, SPLITS).all():
                raise DataError("split tags must be one of train/validation/test")
        if self.row_ids is None:
            self.row_ids = np.arange(n)

    @property
    def n(self) -> int:
        return int(self.outcome.shape[0])

    def subset(self, index) -> "SiteDataset":
        index = np.asarray(index)
        return replace(
            self,
            columns={k: v[index] for k, v in self.columns.items()},
            outcome=self.outcome[index],
            split=None if self.split is None else self.split[index],
            row_ids=self.row_ids[index],
            excluded_missing=0,
        )

    def rows(self, split: str) -> "SiteDataset":
        """Rows carrying the given split tag; untagged data counts as train."""
        if self.split is None:
            if split == "train":
                return self
            raise DataError("dataset has no split tags")
        return self.subset(np.flatnonzero(self.split == split))

    def split_counts(self) -> dict[str, int]:
        if self.split is None:
            return {"train": self.n, "validation": 0, "test": 0}
        return {s: int((self.split == s).sum()) for s in SPLITS}

    def with_site_id(self, site_id: int) -> "SiteDataset":
        return replace(self, site_id=site_id)

    def row(self, i: int) -> dict:
        return {name: col[i].item() for name, col in self.columns.items()}

    def to_csv(self, path) -> None:
        names = self.schema.names
        header = names + [self.schema.outcome_name]
        if self.split is not None:
            header.append(SPLIT_COLUMN)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(self.n):
                rec = []
                for v in self.schema.variables:
                    val = self.columns[v.name][i]
                    rec.append(str(val) if v.is_categorical else repr(float(val)))
                rec.append(str(int(self.outcome[i])))
                if self.split is not None:
                    rec.append(str(self.split[i]))
                w.writerow(rec)


def concat(datasets: Sequence[SiteDataset], site_id: int = 1) -> SiteDataset:
    """Stack datasets sharing one schema (used only for the pooled baseline)."""
    if not datasets:
        raise DataError("nothing to concatenate")
    schema = datasets[0].schema
    for d in datasets[1:]:
        if d.schema != schema:
            raise DataError("cannot concatenate datasets with different schemas")
    tagged = [d.split is not None for d in datasets]
    if any(tagged) and not all(tagged):
        raise DataError("cannot mix tagged and untagged datasets")
    return SiteDataset(
        site_id=site_id,
        schema=schema,
        columns={n: np.concatenate([d.columns[n] for d in datasets]) for n in schema.names},
        outcome=np.concatenate([d.outcome for d in datasets]),
        split=np.concatenate([d.split for d in datasets]) if all(tagged) else None,
        row_ids=np.concatenate([d.row_ids for d in datasets]),
    )


# --------------------------------------------------------------------------
# CSV ingestion


@dataclass(frozen=True)
class RowFilter:
    """Keep rows where ``column <op> value`` holds (numeric columns only)."""

    column: str
    op: str
    value: float

    _OPS = {
        ">=": np.greater_equal,
        ">": np.greater,
        "<=": np.less_equal,
        "<": np.less,
        "==": np.equal,
        "!=": np.not_equal,
    }

    def __post_init__(self):
        if self.op not in self._OPS:
            raise ConfigError(f"unsupported filter operator {self.op!r}")

    @classmethod
    def parse(cls, text: str) -> "RowFilter":
        for op in (">=", "<=", "==", "!=", ">", "<"):
            if op in text:
                col, val = text.split(op, 1)
                try:
                    return cls(col.strip(), op, float(val))
                except ValueError:
                    break
        raise ConfigError(f"cannot parse row filter {text!r}; expected e.g. 'age>=18'")

    def mask(self, data: SiteDataset) -> np.ndarray:
        spec = data.schema[self.column]
        if spec.is_categorical:
            raise ConfigError(f"row filter on categorical column {self.column!r}")
        return self._OPS[self.op](data.columns[self.column], self.value)


def load_csv(path, schema: Schema, site_id: int = 1, filters: Iterable[RowFilter] = ()) -> SiteDataset:
    """Read a site CSV, rejecting rows with any missing cell.

    The number of rejected rows is kept on ``excluded_missing`` and logged.
    An optional ``split`` column carries train/validation/test tags.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        records = [r for r in reader if r]
    expected = set(schema.names) | {schema.outcome_name}
    unknown = [h for h in header if h not in expected and h != SPLIT_COLUMN]
    if unknown:
        raise DataError(f"{path}: unknown column {unknown[0]!r}")
    missing_cols = [c for c in schema.names + [schema.outcome_name] if c not in header]
    if missing_cols:
        raise DataError(f"{path}: missing column {missing_cols[0]!r}")
    if not records:
        raise DataError(f"{path}: no data rows")
    pos = {h: i for i, h in enumerate(header)}
    has_split = SPLIT_COLUMN in pos

    values: dict[str, list] = {n: [] for n in schema.names}
    outcome, split = [], []
    dropped = 0
    for lineno, rec in enumerate(records, start=2):
        if len(rec) != len(header):
            raise DataError(f"{path}: row {lineno} has {len(rec)} cells, expected {len(header)}")
        cells = [c.strip() for c in rec]
        if any(c.lower() in MISSING_TOKENS for c in cells):
            dropped += 1
            continue
        for v in schema.variables:
            cell = cells[pos[v.name]]
            if v.is_categorical:
                if cell not in v.categories:
                    raise DataError(
                        f"{path}: row {lineno}, column {v.name!r}: "
                        f"label {cell!r} not in {list(v.categories)}"
                    )
                values[v.name].append(cell)
            else:
                try:
                    x = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {lineno}, column {v.name!r}: cannot parse {cell!r} as a number"
                    ) from None
                if not math.isfinite(x):
                    raise DataError(f"{path}: row {lineno}, column {v.name!r}: non-finite value")
                values[v.name].append(x)
        y = cells[pos[schema.outcome_name]]
        if y not in ("0", "1"):
            raise DataError(
                f"{path}: row {lineno}, column {schema.outcome_name!r}: outcome must be 0 or 1, got {y!r}"
            )
        outcome.append(int(y))
        if has_split:
            s = cells[pos[SPLIT_COLUMN]]
            if s not in SPLITS:
                raise DataError(f"{path}: row {lineno}: bad split tag {s!r}")
            split.append(s)
    if dropped:
        logger.info("%s: excluded %d row(s) with missing values", path, dropped)
    if not outcome:
        raise DataError(f"{path}: every row has missing values")
    columns = {}
    for v in schema.variables:
        columns[v.name] = (
            np.array(values[v.name], dtype=str)
            if v.is_categorical
            else np.array(values[v.name], dtype=np.float64)
        )
    data = SiteDataset(
        site_id=site_id,
        schema=schema,
        columns=columns,
        outcome=np.array(outcome),
        split=np.array(split) if has_split else None,
        excluded_missing=dropped,
    )
    filters = list(filters)
    if filters:
        keep = np.ones(data.n, dtype=bool)
        for f in filters:
            keep &= f.mask(data)
        if not keep.any():
            raise DataError(f"{path}: row filters removed every row")
        excluded = data.excluded_missing
        data = data.subset(np.flatnonzero(keep))
        data.excluded_missing = excluded
    return data


# --------------------------------------------------------------------------
# Federation layout


def site_weights(mode: str, sizes: Sequence[int] | None = None, custom=None) -> np.ndarray:
    """Normalized per-site weights: ``equal``, ``sample_size`` or ``custom``."""
    if mode == "equal":
        if sizes is None:
            raise ConfigError("equal weights need the number of sites")
        K = len(sizes)
        return np.full(K, 1.0 / K)
    if mode == "sample_size":
        s = np.asarray(sizes, dtype=np.float64)
        if (s <= 0).any():
            raise ConfigError("site sizes must be positive")
        return s / s.sum()
    if mode == "custom":
        w = np.asarray(custom, dtype=np.float64)
        if w.ndim != 1 or w.size == 0 or (w < 0).any() or w.sum() <= 0:
            raise ConfigError("custom weights must be a non-negative, non-zero vector")
        if sizes is not None and len(sizes) != w.size:
            raise ConfigError("custom weights length does not match the number of sites")
        return w / w.sum()
    raise ConfigError(f"unknown weights mode {mode!r}")


DEFAULT_PROPORTIONS = (0.04, 0.05, 0.07, 0.09, 0.10, 0.11, 0.12, 0.13, 0.14, 0.15)


@dataclass(frozen=True)
class FederationConfig:
    K: int = 10
    proportions: tuple[float, ...] = DEFAULT_PROPORTIONS
    weights_mode: str = "equal"
    custom_weights: tuple[float, ...] | None = None
    seed: int = 0
    split_ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)

    def __post_init__(self):
        object.__setattr__(self, "proportions", tuple(float(p) for p in self.proportions))
        object.__setattr__(self, "split_ratios", tuple(float(r) for r in self.split_ratios))
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if len(self.proportions) != self.K:
            raise ConfigError(f"expected {self.K} proportions, got {len(self.proportions)}")
        if any(p <= 0 for p in self.proportions) or abs(math.fsum(self.proportions) - 1) > 1e-9:
            raise ConfigError("proportions must be positive and sum to 1")
        _check_ratios(self.split_ratios)
        if self.weights_mode not in ("equal", "sample_size", "custom"):
            raise ConfigError(f"unknown weights mode {self.weights_mode!r}")
        if self.weights_mode == "custom" and (
            self.custom_weights is None or len(self.custom_weights) != self.K
        ):
            raise ConfigError("custom weights mode needs one weight per site")

    @classmethod
    def equal_sites(cls, K: int, **kw) -> "FederationConfig":
        return cls(K=K, proportions=tuple([1.0 / K] * K), **kw)

    def weights(self, sizes: Sequence[int] | None = None) -> np.ndarray:
        if self.weights_mode == "sample_size" and sizes is None:
            raise ConfigError("sample-size weights need the site sizes")
        return site_weights(self.weights_mode, sizes if sizes is not None else [1] * self.K,
                            self.custom_weights)


def _check_ratios(ratios) -> None:
    if len(ratios) != 3:
        raise ConfigError("split ratios must be (train, validation, test)")
    if any(r < 0 for r in ratios):
        raise ConfigError("split ratios must be non-negative")
    if abs(math.fsum(ratios) - 1) > 1e-9:
        raise ConfigError("split ratios must sum to 1")


def apportion(n: int, proportions: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of ``n`` items.

    Each bucket gets ``floor(p * n)``; leftover items go to the buckets with
    the largest fractional parts (ties: larger proportion, then lower index).
    """
    quotas = [round(p * n, 9) for p in proportions]
    sizes = [math.floor(q) for q in quotas]
    short = n - sum(sizes)
    order = sorted(
        range(len(quotas)), key=lambda j: (-(quotas[j] - sizes[j]), -proportions[j], j)
    )
    for j in order[:short]:
        sizes[j] += 1
    return sizes


def partition_sites(data: SiteDataset, config: FederationConfig) -> list[SiteDataset]:
    """Randomly assign rows to ``config.K`` disjoint sites (unstratified)."""
    if data.n < config.K:
        raise DataError(f"cannot split {data.n} rows across {config.K} sites")
    if config.K == 1:
        return [data.with_site_id(1)]
    sizes = apportion(data.n, config.proportions)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    perm = rng.permutation(data.n)
    out, start = [], 0
    for j, size in enumerate(sizes, start=1):
        idx = np.sort(perm[start:start + size])
        out.append(data.subset(idx).with_site_id(j))
        start += size
    return out


def split_counts(n: int, ratios) -> tuple[int, int, int]:
    _check_ratios(ratios)
    n_val = math.floor(round(ratios[1] * n, 9) + 0.5)
    n_test = math.floor(round(ratios[2] * n, 9) + 0.5)
    return n - n_val - n_test, n_val, n_test


def split_train_valid_test(data: SiteDataset, ratios=(0.7, 0.1, 0.2), seed: int = 0) -> SiteDataset:
    """Tag every row as train, validation or test.

    Validation and test counts are ``round(ratio * n)``; train takes the rest.
    """
    n_train, n_val, _ = split_counts(data.n, ratios)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2, data.site_id]))
    perm = rng.permutation(data.n)
    tags = np.empty(data.n, dtype="<U10")
    tags[perm[:n_train]] = "train"
    tags[perm[n_train:n_train + n_val]] = "validation"
    tags[perm[n_train + n_val:]] = "test"
    return replace(data, split=tags)


# --------------------------------------------------------------------------
# Synthetic cohorts


@dataclass(frozen=True)
class Continuous:
    name: str
    mean: float = 0.0
    sd: float = 1.0


@dataclass(frozen=True)
class Categorical:
    name: str
    categories: tuple[str, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.categories) != len(self.probs):
            raise ConfigError(f"{self.name}: categories and probs differ in length")
        if abs(math.fsum(self.probs) - 1) > 1e-9 or min(self.probs) < 0:
            raise ConfigError(f"{self.name}: probs must be a distribution")


def plan_width(feature_plan) -> int:
    """Number of coefficients (intercept included) the plan encodes to."""
    return 1 + sum(1 if isinstance(f, Continuous) else len(f.categories) - 1 for f in feature_plan)


def generate_synthetic(
    n: int,
    beta_true,
    feature_plan: Sequence[Continuous | Categorical],
    seed: int = 0,
    outcome_name: str = "y",
    site_id: int = 1,
) -> SiteDataset:
    """Draw a cohort whose outcome follows a logistic model.

    Continuous features enter the linear predictor on their raw scale;
    categorical ones through indicators of every non-first category.
    """
    beta = np.asarray(beta_true, dtype=np.float64)
    if beta.ndim != 1 or beta.size != plan_width(feature_plan):
        raise ConfigError(
            f"beta_true has {beta.size} entries, feature plan needs {plan_width(feature_plan)}"
        )
    rng = np.random.default_rng(seed)
    eta = np.full(n, beta[0])
    columns, specs, k = {}, [], 1
    for f in feature_plan:
        if isinstance(f, Continuous):
            x = rng.normal(f.mean, f.sd, size=n)
            eta += beta[k] * x
            k += 1
            columns[f.name] = x
            specs.append(VariableSpec(f.name, "continuous"))
        else:
            codes = rng.choice(len(f.categories), size=n, p=np.asarray(f.probs))
            coef = np.concatenate([[0.0], beta[k:k + len(f.categories) - 1]])
            eta += coef[codes]
            k += len(f.categories) - 1
            columns[f.name] = np.asarray(f.categories, dtype=str)[codes]
            specs.append(VariableSpec(f.name, "categorical", tuple(f.categories)))
    prob = 0.5 * (1.0 + np.tanh(0.5 * eta))
    y = (rng.random(n) < prob).astype(np.int8)
    return SiteDataset(site_id, Schema(tuple(specs), outcome_name), columns, y)
