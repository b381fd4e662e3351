"""Integer points tables derived from logistic coefficients.

Per variable the category coefficients (reference = 0) are shifted so the
smallest is zero, then every entry is scaled so that the sum of per-variable
maxima equals ``s_max`` and rounded half away from zero.  If rounding pushes
the attainable total above ``s_max`` the scale is reduced to the largest
value that respects the cap.  The intercept never appears in the table.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import SiteDataset
from .errors import DataError, NumericalError
from .glm import DesignEncoding


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class ScoreCard:
    s_max: int
    entries: dict[str, dict[str, int]]  # variable -> category -> points, both ordered
    scale: float = float("nan")

    @property
    def variables(self) -> list[str]:
        return list(self.entries)

    @property
    def max_total(self) -> int:
        return sum(max(cats.values()) for cats in self.entries.values())

    def table_equals(self, other: "ScoreCard") -> bool:
        """Same points table, ignoring the diagnostic scale."""
        return self.s_max == other.s_max and _ordered_items(self.entries) == _ordered_items(other.entries)

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "s_max": self.s_max,
            "scale": self.scale,
            "variables": [
                {"name": v, "points": [{"interval": c, "point": p} for c, p in cats.items()]}
                for v, cats in self.entries.items()
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreCard":
        entries = {
            v["name"]: {e["interval"]: int(e["point"]) for e in v["points"]} for v in d["variables"]
        }
        return cls(int(d["s_max"]), entries, float(d["scale"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_markdown(self, labels: Mapping[str, str] | None = None) -> str:
        """Render as a Variable | Interval | Point table (first row of each variable named)."""
        labels = labels or {}
        lines = [
            f"S_max = {self.s_max}; scale = {self.scale!r}",
            "",
            "| Variable | Interval | Point |",
            "|---|---|---|",
        ]
        for v, cats in self.entries.items():
            for i, (c, p) in enumerate(cats.items()):
                name = labels.get(v, v) if i == 0 else ""
                lines.append(f"| {name} | {c} | {p} |")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_markdown(cls, text: str, labels: Mapping[str, str] | None = None) -> "ScoreCard":
        back = {display: name for name, display in (labels or {}).items()}
        head = re.search(r"S_max = (\d+); scale = (\S+)", text)
        if head is None:
            raise DataError("scorecard table is missing its S_max/scale caption")
        entries: dict[str, dict[str, int]] = {}
        current = None
        for line in text.splitlines():
            if not line.startswith("|") or line.startswith("|---") or "| Variable |" in line:
                continue
            cells = [c.strip() for c in line.strip().strip("|").split("|")]
            if len(cells) != 3:
                raise DataError(f"malformed scorecard row: {line!r}")
            name, interval, point = cells
            if name:
                current = back.get(name, name)
                entries[current] = {}
            if current is None:
                raise DataError("scorecard row before any variable name")
            entries[current][interval] = int(point)
        return cls(int(head.group(1)), entries, float(head.group(2)))


def _ordered_items(entries):
    return [(v, list(c.items())) for v, c in entries.items()]


def variable_effects(beta, encoding: DesignEncoding) -> dict[str, np.ndarray]:
    """Coefficient per category of each variable, reference category = 0."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (encoding.width,):
        raise DataError("coefficient vector does not match the encoding")
    if not np.isfinite(beta).all():
        raise NumericalError("coefficients must be finite")
    out = {}
    for name, sl in encoding.slices().items():
        cats = dict(encoding.variables)[name]
        if cats is None:
            raise DataError(f"variable {name!r} is numeric; scorecards need categorical variables")
        out[name] = np.concatenate([[0.0], beta[sl]])
    return out


def derive_points(beta, encoding: DesignEncoding, s_max: int = 100) -> ScoreCard:
    """Map fitted coefficients to an integer points table bounded by ``s_max``."""
    if s_max < 1:
        raise DataError("s_max must be a positive integer")
    effects = variable_effects(beta, encoding)
    shifted = {name: e - e.min() for name, e in effects.items()}
    total = math.fsum(float(s.max()) for s in shifted.values())
    if not total > 0:
        raise NumericalError("degenerate model: every non-intercept coefficient is zero")
    # scale-free shares on a fixed grid make the table invariant to rescaling beta
    shares = {name: np.round(s / total, 12) for name, s in shifted.items()}
    factor = float(s_max)
    maxima = np.array([sh.max() for sh in shares.values()])
    for _ in range(10_000):
        if round_half_away(factor * maxima).sum() <= s_max:
            break
        rounded = round_half_away(factor * maxima)
        with np.errstate(divide="ignore"):
            drop = np.where(maxima > 0, (rounded - 0.5) / maxima, -np.inf)
        i = int(np.argmax(drop))
        factor = float(drop[i])
        # step below the breakpoint until the product actually rounds down
        while round_half_away(factor * maxima[i]) >= rounded[i]:
            factor = float(np.nextafter(factor, 0.0))
    else:  # pragma: no cover - the loop lowers at least one rounded maximum each pass
        raise NumericalError("could not enforce the score cap")
    entries = {}
    for name, sh in shares.items():
        cats = dict(encoding.variables)[name]
        pts = round_half_away(factor * sh).astype(int)
        entries[name] = {c: int(p) for c, p in zip(cats, pts)}
    return ScoreCard(int(s_max), entries, factor / total)


def apply(card: ScoreCard, row: Mapping[str, str]) -> int:
    """Total points of one all-categorical row."""
    total = 0
    for v, cats in card.entries.items():
        if v not in row:
            raise DataError(f"row lacks variable {v!r}")
        label = row[v]
        if label not in cats:
            raise DataError(f"variable {v!r}: category {label!r} has no points")
        total += cats[label]
    return total


def score(card: ScoreCard, data: SiteDataset) -> np.ndarray:
    """Vectorized ``apply`` over every row of a binned dataset."""
    total = np.zeros(data.n, dtype=np.int64)
    for v, cats in card.entries.items():
        if v not in data.columns:
            raise DataError(f"dataset lacks variable {v!r}")
        col = data.columns[v]
        labels = np.array(list(cats), dtype=col.dtype)
        points = np.array(list(cats.values()), dtype=np.int64)
        order = np.argsort(labels)
        pos = np.searchsorted(labels[order], col)
        pos = np.minimum(pos, len(labels) - 1)
        hit = labels[order][pos] == col
        if not hit.all():
            raise DataError(f"variable {v!r}: category {col[~hit][0]!r} has no points")
        total += points[order][pos]
    return total


def refit_final(variables: Sequence[str], pipeline):
    """Refit binning + model on the selected variables; return ``(beta, card)``.

    ``pipeline`` is any object exposing ``fit_candidate(variables)`` that
    returns a candidate with ``beta`` and ``card`` attributes.
    """
    if not variables:
        raise DataError("no variables selected")
    cand = pipeline.fit_candidate(list(variables))
    return cand.beta, cand.card
