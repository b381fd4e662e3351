"""Discrimination metrics, the parsimony sweep and cross-site summaries."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm, rankdata

from .errors import DataError, FedScoreError, NumericalError, SingleClassError

logger = logging.getLogger(__name__)


def _split_classes(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DataError("scores and labels must be 1-d and of equal length")
    if not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be 0/1")
    pos, neg = scores[labels == 1], scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise SingleClassError("AUC needs both outcome classes")
    return pos, neg


def auc(scores, labels) -> float:
    """Mann-Whitney AUC, ties counted as one half."""
    pos, neg = _split_classes(scores, labels)
    m, n = pos.size, neg.size
    ranks = rankdata(np.concatenate([pos, neg]))
    return float((ranks[:m].sum() - m * (m + 1) / 2.0) / (m * n))


def delong_components(scores, labels):
    """AUC and the DeLong placement values (V10 for positives, V01 for negatives)."""
    pos, neg = _split_classes(scores, labels)
    m, n = pos.size, neg.size
    r_all = rankdata(np.concatenate([pos, neg]))
    r_pos, r_neg = rankdata(pos), rankdata(neg)
    a = (r_all[:m].sum() - m * (m + 1) / 2.0) / (m * n)
    v10 = (r_all[:m] - r_pos) / n
    v01 = 1.0 - (r_all[m:] - r_neg) / m
    return float(a), v10, v01


def auc_ci(scores, labels, level: float = 0.95) -> tuple[float, float]:
    """DeLong normal-approximation interval, clipped to [0, 1]."""
    a, v10, v01 = delong_components(scores, labels)
    m, n = v10.size, v01.size
    var = 0.0
    if m > 1:
        var += np.var(v10, ddof=1) / m
    if n > 1:
        var += np.var(v01, ddof=1) / n
    if not var > 0:
        return a, a
    z = norm.ppf(0.5 + level / 2.0)
    half = z * math.sqrt(var)
    return max(0.0, a - half), min(1.0, a + half)


def weighted_metrics(mus, weights) -> tuple[float, float]:
    """Weighted mean (M1) and weighted spread (M2) of per-site performance."""
    mu = np.asarray(mus, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if mu.shape != w.shape or mu.ndim != 1:
        raise DataError("one weight per site performance is required")
    live = mu[w > 0]
    if live.size and live.min() == live.max():
        return float(live[0]), 0.0  # exact, even when the weights sum to 1 - ulp
    m1 = math.fsum(w * mu)
    if live.size:
        m1 = min(max(m1, float(live.min())), float(live.max()))
    m2 = math.sqrt(max(0.0, math.fsum(w * (m1 - mu) ** 2)))
    return m1, m2


# --------------------------------------------------------------------------
# model selection


@dataclass(frozen=True)
class CurvePoint:
    m: int
    variables: tuple[str, ...]
    psi: float | None  # None when the candidate fit failed
    phis: tuple[float, ...] = ()
    error: str | None = None

    @property
    def skipped(self) -> bool:
        return self.psi is None


@dataclass(frozen=True)
class ParsimonyCurve:
    points: tuple[CurvePoint, ...]
    d_max: int
    epsilon: float = 0.005
    forced: tuple[str, ...] = ()

    def fitted(self) -> list[CurvePoint]:
        return [p for p in self.points if not p.skipped]

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "d_max": self.d_max,
            "epsilon": self.epsilon,
            "forced": list(self.forced),
            "points": [
                {
                    "m": p.m,
                    "variables": list(p.variables),
                    "psi": p.psi,
                    "phis": list(p.phis),
                    "error": p.error,
                }
                for p in self.points
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParsimonyCurve":
        pts = tuple(
            CurvePoint(p["m"], tuple(p["variables"]), p["psi"], tuple(p.get("phis", ())), p.get("error"))
            for p in d["points"]
        )
        return cls(pts, d["d_max"], d.get("epsilon", 0.005), tuple(d.get("forced", ())))

    @classmethod
    def from_psi(cls, psis: Sequence[float], epsilon: float = 0.005) -> "ParsimonyCurve":
        """Curve with placeholder variable names, handy for hand-built examples."""
        pts = tuple(
            CurvePoint(m, tuple(f"x{i}" for i in range(1, m + 1)), float(p))
            for m, p in enumerate(psis, start=1)
        )
        return cls(pts, len(psis), epsilon)


def candidate_sets(ranked: Sequence[str], d_max: int, forced: Sequence[str] = ()) -> list[tuple[str, ...]]:
    """Nested variable sets: forced variables first, then the global ranking."""
    if d_max > len(ranked):
        raise DataError(f"d_max={d_max} exceeds the {len(ranked)} ranked variables")
    unknown = set(forced) - set(ranked)
    if unknown:
        raise DataError(f"forced variables not in the ranking: {sorted(unknown)}")
    if len(forced) > d_max:
        raise DataError("more forced variables than the variable cap allows")
    order = list(forced) + [v for v in ranked if v not in forced]
    start = max(1, len(forced))
    return [tuple(order[:m]) for m in range(start, d_max + 1)]


def parsimony_sweep(
    evaluate: Callable[[Sequence[str]], Sequence[float]],
    ranked: Sequence[str],
    d_max: int,
    weights,
    forced: Sequence[str] = (),
    epsilon: float = 0.005,
) -> ParsimonyCurve:
    """Score nested candidate models on validation data.

    ``evaluate(variables)`` fits a candidate and returns one validation
    metric per site; ``psi`` is their weighted sum.  Candidates whose fit
    raises a numerical or data error are recorded as skipped.
    """
    w = np.asarray(weights, dtype=np.float64)
    points = []
    for variables in candidate_sets(ranked, d_max, forced):
        try:
            phis = np.asarray(evaluate(variables), dtype=np.float64)
            if phis.shape != w.shape:
                raise DataError("evaluate must return one value per site")
            psi = math.fsum(w * phis)
            points.append(CurvePoint(len(variables), variables, psi, tuple(float(x) for x in phis)))
        except (NumericalError, DataError) as exc:
            logger.warning("skipping candidate with %d variables: %s", len(variables), exc)
            points.append(CurvePoint(len(variables), variables, None, (), str(exc)))
    curve = ParsimonyCurve(tuple(points), d_max, epsilon, tuple(forced))
    if not curve.fitted():
        raise NumericalError("every candidate model failed to fit")
    return curve


def select_model(curve: ParsimonyCurve, epsilon: float | None = None) -> CurvePoint:
    """Smallest model within ``epsilon`` of the best ``psi``.

    The best model is the argmax of ``psi`` (ties go to fewer variables);
    the result is the smallest ``d <= m*`` with ``psi[m*] - psi[d] <= epsilon``.
    """
    eps = curve.epsilon if epsilon is None else epsilon
    fitted = curve.fitted()
    if not fitted:
        raise FedScoreError("curve has no fitted points")
    best = fitted[0]
    for p in fitted[1:]:
        if p.psi > best.psi:
            best = p
    for p in fitted:
        if p.m <= best.m and best.psi - p.psi <= eps:
            return p
    return best  # pragma: no cover - best itself always qualifies


@dataclass
class EvaluationReport:
    site_ids: list[int]
    aucs: list[float]
    cis: list[tuple[float, float]]
    weights: list[float]
    m1: float = field(init=False)
    m2: float = field(init=False)

    def __post_init__(self):
        self.m1, self.m2 = weighted_metrics(self.aucs, self.weights)

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "sites": [
                {"site_id": s, "auc": a, "ci": [lo, hi]}
                for s, a, (lo, hi) in zip(self.site_ids, self.aucs, self.cis)
            ],
            "weights": list(self.weights),
            "M1": self.m1,
            "M2": self.m2,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        return cls(
            [s["site_id"] for s in d["sites"]],
            [s["auc"] for s in d["sites"]],
            [tuple(s["ci"]) for s in d["sites"]],
            list(d["weights"]),
        )


def evaluate_sites(site_scores: Sequence[tuple[int, np.ndarray, np.ndarray]], weights,
                   level: float = 0.95) -> EvaluationReport:
    """Per-site AUC with DeLong CI, then M1/M2 across sites."""
    ids, aucs, cis = [], [], []
    for site_id, s, y in site_scores:
        ids.append(site_id)
        aucs.append(auc(s, y))
        cis.append(auc_ci(s, y, level))
    return EvaluationReport(ids, aucs, cis, [float(x) for x in weights])
