"""End-to-end scoring pipelines for the three comparison arms.

* ``FederatedArm`` - ranking, binning and fitting run across sites; every
  cross-site exchange is a serialized payload appended to ``transcript``.
* ``PooledArm`` - the same steps on the concatenated data (baseline only).
* ``LocalArm`` - the same steps on a single site's data.

All arms share the sites' train/validation/test tags and are evaluated on
every site's held-out rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import binning, glm, protocol, ranking
from .binning import BinningConfig, CutoffSet
from .data import SiteDataset, concat
from .errors import DataError
from .evaluation import (
    EvaluationReport,
    ParsimonyCurve,
    auc,
    evaluate_sites,
    parsimony_sweep,
    select_model,
)
from .forest import ForestParams
from .scorecard import ScoreCard, derive_points, score


@dataclass(frozen=True)
class Candidate:
    variables: tuple[str, ...]
    beta: np.ndarray
    encoding: glm.DesignEncoding
    card: ScoreCard


def site_forest_seed(seed: int, site_id: int) -> int:
    return int(np.random.SeedSequence([seed, 3, site_id]).generate_state(1)[0])


class Arm:
    """Shared machinery; subclasses supply ranking, cutoffs and the fitter."""

    name = "arm"

    def __init__(self, sites: Sequence[SiteDataset], weights, binning_config: BinningConfig | None = None,
                 s_max: int = 100, forest: ForestParams | None = None, seed: int = 0):
        if not sites:
            raise DataError("an arm needs at least one site")
        self.sites = list(sites)
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.shape != (len(self.sites),):
            raise DataError("one weight per site is required")
        self.binning_config = binning_config or BinningConfig()
        self.s_max = s_max
        self.forest = forest or ForestParams()
        self.seed = seed
        self._candidates: dict[tuple[str, ...], Candidate] = {}

    # subclass hooks -----------------------------------------------------
    def global_ranking(self) -> ranking.GlobalRanking:
        raise NotImplementedError

    def cutoffs(self) -> CutoffSet:
        raise NotImplementedError

    def _fit(self, variables: tuple[str, ...]) -> tuple[np.ndarray, glm.DesignEncoding]:
        raise NotImplementedError

    # shared -------------------------------------------------------------
    @cached_property
    def binned_sites(self) -> list[SiteDataset]:
        """Every site's rows binned with this arm's cutoffs."""
        cuts = self.cutoffs()
        return [binning.transform(s, cuts) for s in self.sites]

    def fit_candidate(self, variables: Sequence[str]) -> Candidate:
        key = tuple(variables)
        if key not in self._candidates:
            beta, enc = self._fit(key)
            self._candidates[key] = Candidate(key, beta, enc, derive_points(beta, enc, self.s_max))
        return self._candidates[key]

    def site_scores(self, card: ScoreCard, split: str) -> list[tuple[int, np.ndarray, np.ndarray]]:
        out = []
        for b in self.binned_sites:
            rows = b.rows(split)
            out.append((b.site_id, score(card, rows).astype(np.float64), rows.outcome))
        return out

    def validation_aucs(self, variables: Sequence[str]) -> list[float]:
        card = self.fit_candidate(variables).card
        return [auc(s, y) for _, s, y in self.site_scores(card, "validation")]

    def sweep(self, d_max: int, epsilon: float = 0.005, forced: Sequence[str] = ()) -> ParsimonyCurve:
        return parsimony_sweep(self.validation_aucs, self.global_ranking().ordered, d_max,
                               self.weights, forced, epsilon)

    def evaluate(self, card: ScoreCard, level: float = 0.95) -> EvaluationReport:
        return evaluate_sites(self.site_scores(card, "test"), self.weights, level)

    def develop(self, d_max: int, epsilon: float = 0.005, forced: Sequence[str] = ()) -> "ArmResult":
        """Rank, sweep, select, refit and evaluate."""
        curve = self.sweep(d_max, epsilon, forced)
        chosen = select_model(curve)
        final = self.fit_candidate(chosen.variables)
        return ArmResult(self.name, self.global_ranking(), self.cutoffs(), curve, chosen.m,
                         final, self.evaluate(final.card))


@dataclass
class ArmResult:
    name: str
    ranking: ranking.GlobalRanking
    cutoffs: CutoffSet
    curve: ParsimonyCurve
    selected_m: int
    final: Candidate
    evaluation: EvaluationReport


def _encode_train(binned: SiteDataset, variables) -> protocol.EncodedSite:
    X, y, enc = glm.encode(binned.rows("train"), variables)
    return protocol.EncodedSite(binned.site_id, X, y, enc)


class FederatedArm(Arm):
    """Sites exchange only ranks, quantiles, category shares and gradients."""

    name = "federated"

    def __init__(self, sites, weights, lead: int | str = 0, local_rankings=None, **kw):
        super().__init__(sites, weights, **kw)
        if lead == "largest":
            lead = int(np.argmax([s.rows("train").n for s in self.sites]))
        if not 0 <= int(lead) < len(self.sites):
            raise DataError(f"lead index {lead} out of range")
        self.lead = int(lead)
        self.transcript = protocol.Transcript()
        self._local_rankings = local_rankings
        self.fit_transcripts: dict[tuple[str, ...], protocol.Transcript] = {}

    @property
    def lead_site_id(self) -> int:
        return self.sites[self.lead].site_id

    def local_ranking(self, site: SiteDataset) -> ranking.LocalRanking:
        if self._local_rankings is not None and site.site_id in self._local_rankings:
            return self._local_rankings[site.site_id]
        return ranking.forest_importance(site, self.forest, site_forest_seed(self.seed, site.site_id))

    @cached_property
    def _global_ranking(self) -> ranking.GlobalRanking:
        received = []
        for s in self.sites:
            wire = self.local_ranking(s).to_json()
            self.transcript.record("rank", s.site_id, self.lead_site_id, wire)
            received.append(ranking.LocalRanking.from_json(wire))
        return ranking.aggregate_rankings(received, self.weights)

    def global_ranking(self):
        return self._global_ranking

    @cached_property
    def _cutoffs(self) -> CutoffSet:
        cfg = self.binning_config
        quantiles, shares = [], []
        for s in self.sites:
            wire = json.dumps(
                {"site_id": s.site_id,
                 "quantiles": binning.cutoff_payload(s, cfg),
                 "category_shares": binning.category_frequencies(s)},
                sort_keys=True,
            )
            self.transcript.record("bin", s.site_id, self.lead_site_id, wire)
            d = json.loads(wire)
            quantiles.append(d["quantiles"])
            shares.append(d["category_shares"])
        fed = binning.federate_cutoffs(quantiles, self.weights, cfg)
        kept = binning.federate_category_merges(shares, self.weights, self.sites[0].schema, cfg)
        cuts = CutoffSet(fed.cutoffs, kept)
        self.transcript.record("bin-broadcast", self.lead_site_id, "all", cuts.to_json())
        return cuts

    def cutoffs(self):
        return self._cutoffs

    def _fit(self, variables):
        encoded = [_encode_train(b, variables) for b in self.binned_sites]
        fit, tr = protocol.run_one_shot(encoded, lead_index=self.lead)
        self.fit_transcripts[variables] = tr
        return fit.beta, encoded[self.lead].encoding


class PooledArm(Arm):
    """Centralized baseline: the same steps on all sites' rows stacked."""

    name = "pooled"

    @cached_property
    def pooled(self) -> SiteDataset:
        return concat(self.sites)

    @cached_property
    def _global_ranking(self):
        lr = ranking.forest_importance(self.pooled, self.forest, site_forest_seed(self.seed, self.pooled.site_id))
        return ranking.aggregate_rankings([lr], [1.0])

    def global_ranking(self):
        return self._global_ranking

    @cached_property
    def _cutoffs(self):
        return binning.local_cutoffs(self.pooled, self.binning_config)

    def cutoffs(self):
        return self._cutoffs

    def _fit(self, variables):
        X, y, enc = glm.encode(binning.transform(self.pooled, self.cutoffs()).rows("train"), variables)
        return glm.fit_mle(X, y).beta, enc


class LocalArm(Arm):
    """A model developed on one site alone, evaluated everywhere."""

    def __init__(self, sites, weights, home: int, local_ranking: ranking.LocalRanking | None = None, **kw):
        super().__init__(sites, weights, **kw)
        self.home = self.sites[home]
        self.name = f"local_{self.home.site_id}"
        self._local = local_ranking

    @cached_property
    def _global_ranking(self):
        lr = self._local or ranking.forest_importance(
            self.home, self.forest, site_forest_seed(self.seed, self.home.site_id))
        return ranking.aggregate_rankings([lr], [1.0])

    def global_ranking(self):
        return self._global_ranking

    @cached_property
    def _cutoffs(self):
        return binning.local_cutoffs(self.home, self.binning_config)

    def cutoffs(self):
        return self._cutoffs

    def _fit(self, variables):
        home = self.binned_sites[self.sites.index(self.home)]
        X, y, enc = glm.encode(home.rows("train"), variables)
        return glm.fit_mle(X, y).beta, enc
