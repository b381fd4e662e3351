"""Three-arm desk experiment: local per-site, federated and pooled scorecards.

The result is a *bundle*: a mapping of relative file names to text, written
once at the end.  Nothing in it depends on wall-clock time, so identical
configurations reproduce identical bytes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import scipy

from . import __version__
from .binning import BinningConfig
from .data import (
    DEFAULT_PROPORTIONS,
    Categorical,
    Continuous,
    FederationConfig,
    generate_synthetic,
    RowFilter,
    SiteDataset,
    load_csv,
    load_schema,
    partition_sites,
    split_train_valid_test,
)
from .errors import ConfigError, DataError, FedScoreError, NumericalError
from .forest import ForestParams
from .pipeline import Arm, ArmResult, FederatedArm, LocalArm, PooledArm, site_forest_seed
from .plotting import parsimony_svg
from .ranking import forest_importance

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

# A vital-signs-like cohort: eight informative predictors, two pure noise (dbp, temp).
DEFAULT_PLAN = (
    Continuous("age", 63.0, 17.0),
    Continuous("pulse", 86.0, 18.0),
    Continuous("sbp", 137.0, 28.0),
    Continuous("spo2", 97.0, 3.0),
    Continuous("resp_rate", 18.0, 2.5),
    Continuous("dbp", 72.0, 14.0),
    Continuous("ed_visits", 1.0, 1.5),
    Categorical("triage", ("P1", "P2", "P3"), (0.24, 0.55, 0.21)),
    Categorical("sex", ("F", "M"), (0.5, 0.5)),
    Continuous("temp", 36.8, 0.6),
)
DEFAULT_BETA = (6.8, 0.035, 0.02, -0.012, -0.12, 0.1, 0.0, 0.25, -0.9, -1.6, 0.15, 0.0)


@dataclass(frozen=True)
class ExperimentConfig:
    csv: str | None = None
    schema: str | None = None
    filters: tuple[str, ...] = ()
    n: int = 40000
    sites: int = 10
    proportions: tuple[float, ...] | None = None
    weights: str = "equal"
    custom_weights: tuple[float, ...] | None = None
    split: tuple[float, float, float] = (0.7, 0.1, 0.2)
    percentiles: tuple[float, ...] = (5, 20, 80, 95)
    max_categories: int = 5
    s_max: int = 100
    d_max: int = 8
    epsilon: float = 0.005
    forced: tuple[str, ...] = ()
    lead: int | str = 1  # site id, or "largest"
    seed: int = 0
    n_trees: int = 100
    out: str = "bundle"

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known - {"format_version"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for k, v in d.items():
            if k == "format_version":
                continue
            kw[k] = tuple(v) if isinstance(v, list) else v
        return cls(**kw)

    def to_dict(self) -> dict[str, Any]:
        d = {"format_version": FORMAT_VERSION}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            d[f.name] = list(v) if isinstance(v, tuple) else v
        return d

    def federation(self) -> FederationConfig:
        props = self.proportions
        if props is None:
            props = DEFAULT_PROPORTIONS if self.sites == 10 else tuple([1.0 / self.sites] * self.sites)
        return FederationConfig(
            K=self.sites, proportions=props, weights_mode=self.weights,
            custom_weights=self.custom_weights, seed=self.seed, split_ratios=self.split,
        )

    def binning(self) -> BinningConfig:
        return BinningConfig(percentiles=tuple(self.percentiles), max_categories=self.max_categories)

    def validate(self) -> None:
        """Check everything that can be checked before touching data."""
        if (self.csv is None) != (self.schema is None):
            raise ConfigError("csv input needs both 'csv' and 'schema'")
        if self.csv is None and self.n < 10 * self.sites:
            raise ConfigError("synthetic n is too small for the number of sites")
        if self.s_max < 1:
            raise ConfigError("s_max must be a positive integer")
        if self.d_max < 1:
            raise ConfigError("d_max must be >= 1")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        if self.lead != "largest":
            if isinstance(self.lead, bool) or not isinstance(self.lead, int):
                raise ConfigError("lead must be a site id or 'largest'")
            if not 1 <= self.lead <= self.sites:
                raise ConfigError(f"lead site {self.lead} is not in 1..{self.sites}")
        for f in self.filters:
            RowFilter.parse(f)
        self.federation()
        self.binning()


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return ExperimentConfig.from_dict(json.load(fh))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def load_data(config: ExperimentConfig) -> SiteDataset:
    if config.csv is not None:
        schema = load_schema(config.schema)
        return load_csv(config.csv, schema, filters=[RowFilter.parse(f) for f in config.filters])
    return generate_synthetic(config.n, DEFAULT_BETA, DEFAULT_PLAN, seed=config.seed)


def prepare_sites(config: ExperimentConfig, data: SiteDataset | None = None) -> list[SiteDataset]:
    """Partition into sites and tag train/validation/test rows (shared by all arms)."""
    data = load_data(config) if data is None else data
    sites = partition_sites(data, config.federation())
    return [split_train_valid_test(s, config.split, config.seed) for s in sites]


def check_variables(config: ExperimentConfig, sites: list[SiteDataset]) -> tuple[str, ...]:
    schema = sites[0].schema
    if config.d_max > schema.P:
        raise ConfigError(f"d_max={config.d_max} exceeds the {schema.P} available variables")
    forced = tuple(dict.fromkeys(list(schema.forced) + list(config.forced)))
    missing = [v for v in forced if v not in schema.names]
    if missing:
        raise ConfigError(f"forced variable(s) not in the schema: {missing}")
    if len(forced) > config.d_max:
        raise ConfigError("more forced variables than d_max allows")
    return forced


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


@dataclass
class Bundle:
    files: dict[str, str] = field(default_factory=dict)

    def add_json(self, name: str, obj) -> None:
        self.files[name] = _dump(obj)

    def json(self, name: str):
        return json.loads(self.files[name])

    def write(self, out) -> Path:
        out = Path(out)
        for name, text in sorted(self.files.items()):
            path = out / name
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
        return out

    @classmethod
    def read(cls, root) -> "Bundle":
        root = Path(root)
        if not (root / "manifest.json").is_file():
            raise FedScoreError(f"{root}: not a bundle (manifest.json missing)")
        files = {}
        for p in sorted(root.rglob("*")):
            if p.is_file():
                files[p.relative_to(root).as_posix()] = p.read_text(encoding="utf-8")
        return cls(files)


def _arm_files(bundle: Bundle, result: ArmResult) -> None:
    base = f"arms/{result.name}/"
    bundle.add_json(base + "ranking.json", {"format_version": FORMAT_VERSION, **result.ranking.to_dict()})
    bundle.add_json(base + "cutoffs.json", {"format_version": FORMAT_VERSION, **result.cutoffs.to_dict()})
    bundle.add_json(base + "curve.json", result.curve.to_dict())
    bundle.files[base + "parsimony.svg"] = parsimony_svg(result.curve, f"Parsimony plot: {result.name}")
    bundle.add_json(base + "scorecard.json", result.final.card.to_dict())
    bundle.add_json(base + "model.json", {
        "format_version": FORMAT_VERSION,
        "variables": list(result.final.variables),
        "columns": result.final.encoding.columns,
        "beta": [float(b) for b in result.final.beta],
        "selected_m": result.selected_m,
    })
    bundle.add_json(base + "evaluation.json", result.evaluation.to_dict())


def run_experiment(config: ExperimentConfig, sites: list[SiteDataset] | None = None) -> Bundle:
    """Develop and evaluate all three arms; return the bundle (not yet written)."""
    config.validate()
    if sites is None:
        sites = prepare_sites(config)
    forced = check_variables(config, sites)
    fed = config.federation()
    weights = fed.weights([s.rows("train").n for s in sites])
    forest = ForestParams(n_trees=config.n_trees)
    common = dict(binning_config=config.binning(), s_max=config.s_max, forest=forest, seed=config.seed)

    local_rankings = {
        s.site_id: forest_importance(s, forest, site_forest_seed(config.seed, s.site_id)) for s in sites
    }
    lead = "largest" if config.lead == "largest" else config.lead - 1
    arms: list[Arm] = [
        LocalArm(sites, weights, home=j, local_ranking=local_rankings[s.site_id], **common)
        for j, s in enumerate(sites)
    ]
    federated = FederatedArm(sites, weights, lead=lead, local_rankings=local_rankings, **common)
    arms += [federated, PooledArm(sites, weights, **common)]

    bundle = Bundle()
    results: list[ArmResult] = []
    failed: dict[str, str] = {}
    for arm in arms:
        try:
            res = arm.develop(config.d_max, config.epsilon, forced)
        except (NumericalError, DataError) as exc:
            if not isinstance(arm, LocalArm):
                raise
            # a small site may be unable to support any candidate; record and go on
            logger.warning("arm %s failed: %s", arm.name, exc)
            failed[arm.name] = str(exc)
            continue
        results.append(res)
        _arm_files(bundle, res)

    transcript = {"format_version": FORMAT_VERSION, "lead_site": federated.lead_site_id,
                  "records": list(federated.transcript.records)}
    fed_res = next(r for r in results if r.name == "federated")
    transcript["records"] += federated.fit_transcripts[fed_res.final.variables].records
    bundle.add_json("federation_transcript.json", transcript)

    site_ids = [s.site_id for s in sites]
    bundle.add_json("sites.json", {
        "format_version": FORMAT_VERSION,
        "sites": [
            {"site_id": s.site_id, "n": s.n, "weight": float(w), **s.split_counts()}
            for s, w in zip(sites, weights)
        ],
    })
    bundle.add_json("auc_table.json", {
        "format_version": FORMAT_VERSION,
        "site_ids": site_ids,
        "rows": [
            {"model": r.name, "auc": r.evaluation.aucs, "ci": [list(c) for c in r.evaluation.cis],
             "M1": r.evaluation.m1, "M2": r.evaluation.m2}
            for r in results
        ],
    })
    bundle.add_json("summary.json", {
        "format_version": FORMAT_VERSION,
        "arms": {
            r.name: {"M1": r.evaluation.m1, "M2": r.evaluation.m2, "selected_m": r.selected_m,
                     "variables": list(r.final.variables)}
            for r in results
        },
        "failed_arms": failed,
    })
    from .report import render_report

    bundle.files["report.md"] = render_report(bundle)
    bundle.add_json("manifest.json", _manifest(config, bundle))
    return bundle


def _manifest(config: ExperimentConfig, bundle: Bundle) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "seed": config.seed,
        # the output location is not part of the result
        "config": {k: v for k, v in config.to_dict().items() if k != "out"},
        "files": {
            name: hashlib.sha256(text.encode()).hexdigest() for name, text in sorted(bundle.files.items())
        },
    }
