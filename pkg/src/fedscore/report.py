"""Markdown summary of an experiment bundle."""

from __future__ import annotations

import re
from pathlib import Path

from .errors import FedScoreError
from .scorecard import ScoreCard

SCORECARD_HEADING = "## Scorecards"


def _cell(a: float, ci) -> str:
    return f"{a:.4f} ({ci[0]:.4f}-{ci[1]:.4f})"


def render_report(bundle) -> str:
    """Comparison table (one row per model) followed by every arm's scorecard."""
    from .experiment import Bundle

    if isinstance(bundle, (str, Path)):
        bundle = Bundle.read(bundle)
    for name in ("auc_table.json", "summary.json"):
        if name not in bundle.files:
            raise FedScoreError(f"bundle is missing {name}")
    table = bundle.json("auc_table.json")
    summary = bundle.json("summary.json")
    ids = table["site_ids"]

    lines = ["# Scorecard experiment", "", "## Test-set AUC by site", ""]
    head = ["Model"] + [f"Site {i}" for i in ids] + ["Mean (M1)", "SD (M2)"]
    lines.append("| " + " | ".join(head) + " |")
    lines.append("|" + "---|" * len(head))
    for row in table["rows"]:
        cells = [row["model"]] + [_cell(a, ci) for a, ci in zip(row["auc"], row["ci"])]
        cells += [f"{row['M1']:.4f}", f"{row['M2']:.4f}"]
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("")

    lines += ["## Selected models", ""]
    for arm, info in summary["arms"].items():
        lines.append(f"- {arm}: {info['selected_m']} variables ({', '.join(info['variables'])})")
    for arm, err in summary.get("failed_arms", {}).items():
        lines.append(f"- {arm}: failed ({err})")
    lines.append("")

    lines += [SCORECARD_HEADING, ""]
    for arm in summary["arms"]:
        key = f"arms/{arm}/scorecard.json"
        if key not in bundle.files:
            raise FedScoreError(f"bundle is missing {key}")
        card = ScoreCard.from_dict(bundle.json(key))
        lines += [f"### {arm}", "", card.to_markdown()]
    return "\n".join(lines)


def parse_scorecards(markdown: str) -> dict[str, ScoreCard]:
    """Read the scorecard section of a rendered report back into cards."""
    if SCORECARD_HEADING not in markdown:
        raise FedScoreError("report has no scorecard section")
    section = markdown.split(SCORECARD_HEADING, 1)[1]
    parts = re.split(r"^### (.+)$", section, flags=re.MULTILINE)
    return {parts[i].strip(): ScoreCard.from_markdown(parts[i + 1]) for i in range(1, len(parts), 2)}
