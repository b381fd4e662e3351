"""Command-line entry point: each pipeline stage plus the end-to-end ``run``.

Site directories (written by ``partition``) hold ``schema.json`` and one
``site_NN.csv`` per site with a ``split`` column.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import binning
from .data import SiteDataset, generate_synthetic, load_csv, load_schema, save_schema
from .errors import ConfigError, DataError, FedScoreError, NumericalError, ProtocolError
from .evaluation import ParsimonyCurve, select_model
from .experiment import (
    DEFAULT_BETA,
    DEFAULT_PLAN,
    ExperimentConfig,
    load_config,
    prepare_sites,
    run_experiment,
)
from .forest import ForestParams
from .pipeline import FederatedArm
from .plotting import plot_parsimony
from .scorecard import ScoreCard

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4, 5

logger = logging.getLogger("fedscore")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--sites", type=int, help="number of sites K")
    p.add_argument("--d-max", type=int, help="maximum variables per model")
    p.add_argument("--epsilon", type=float, help="plateau tolerance for model selection")
    p.add_argument("--s-max", type=int, help="maximum total score")
    p.add_argument("--lead", help="lead site id, or 'largest'")
    p.add_argument("--out", help="output path")
    p.add_argument("--filter", action="append", default=None, metavar="EXPR",
                   help="row filter such as 'age>=18' (repeatable)")
    p.add_argument("--n", type=int, help="rows of the synthetic cohort")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedscore", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic cohort (data.csv + schema.json)")
    _common(p)

    p = sub.add_parser("partition", help="split a cohort into tagged site files")
    _common(p)
    p.add_argument("--csv")
    p.add_argument("--schema")

    for name, text in (("rank", "federated variable ranking"), ("bin", "federated cutoffs")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("site_dir")

    p = sub.add_parser("fit", help="one-shot federated fit and scorecard")
    _common(p)
    p.add_argument("site_dir")
    p.add_argument("--cutoffs", required=True)
    p.add_argument("--variables", required=True, help="comma-separated variable names")

    p = sub.add_parser("select", help="pick a model from a parsimony curve")
    _common(p)
    p.add_argument("curve")

    p = sub.add_parser("evaluate", help="per-site test AUC of a scorecard")
    _common(p)
    p.add_argument("site_dir")
    p.add_argument("--cutoffs", required=True)
    p.add_argument("--scorecard", required=True)

    p = sub.add_parser("run", help="end-to-end three-arm experiment")
    _common(p)

    p = sub.add_parser("plot", help="render a parsimony curve as SVG")
    _common(p)
    p.add_argument("curve")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    over = {}
    for flag, key in (("seed", "seed"), ("sites", "sites"), ("d_max", "d_max"), ("epsilon", "epsilon"),
                      ("s_max", "s_max"), ("out", "out"), ("n", "n"), ("csv", "csv"), ("schema", "schema")):
        v = getattr(args, flag, None)
        if v is not None:
            over[key] = v
    if args.lead is not None:
        over["lead"] = args.lead if args.lead == "largest" else _int(args.lead, "--lead")
    if args.filter:
        over["filters"] = tuple(args.filter)
    if "sites" in over and over["sites"] != cfg.sites and cfg.proportions is not None:
        over["proportions"] = None  # old proportions no longer fit K
    cfg = dataclasses.replace(cfg, **over)
    cfg.validate()
    return cfg


def _int(text: str, flag: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{flag} expects an integer or 'largest', got {text!r}") from None


def _write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def read_site_dir(path) -> list[SiteDataset]:
    root = Path(path)
    schema = load_schema(root / "schema.json")
    files = sorted(root.glob("site_*.csv"))
    if not files:
        raise DataError(f"{root}: no site_*.csv files")
    sites = []
    for f in files:
        try:
            site_id = int(f.stem.split("_", 1)[1])
        except ValueError:
            raise DataError(f"{f}: cannot read a site id from the file name") from None
        sites.append(load_csv(f, schema, site_id=site_id))
    return sites


def _federated(cfg: ExperimentConfig, sites) -> FederatedArm:
    w = cfg.federation().weights([s.rows("train").n for s in sites]) if len(sites) == cfg.sites else None
    if w is None:
        raise ConfigError(f"--sites={cfg.sites} but the directory holds {len(sites)} sites")
    lead = "largest" if cfg.lead == "largest" else cfg.lead - 1
    return FederatedArm(sites, w, lead=lead, binning_config=cfg.binning(), s_max=cfg.s_max,
                        forest=ForestParams(n_trees=cfg.n_trees), seed=cfg.seed)


# --------------------------------------------------------------------------
# commands


def cmd_synth(cfg, args):
    data = generate_synthetic(cfg.n, DEFAULT_BETA, DEFAULT_PLAN, seed=cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    data.to_csv(out / "data.csv")
    save_schema(data.schema, out / "schema.json")


def cmd_partition(cfg, args):
    sites = prepare_sites(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_schema(sites[0].schema, out / "schema.json")
    width = max(2, len(str(len(sites))))
    for s in sites:
        s.to_csv(out / f"site_{s.site_id:0{width}d}.csv")
    _write(out / "sites.json", _json({
        "format_version": 1,
        "sites": [{"site_id": s.site_id, "n": s.n, **s.split_counts()} for s in sites],
    }))


def cmd_rank(cfg, args):
    sites = read_site_dir(args.site_dir)
    arm = _federated(cfg, sites)
    g = arm.global_ranking()
    _write(cfg.out, _json({"format_version": 1, **g.to_dict(),
                           "local": [json.loads(r["payload"]) for r in arm.transcript.of_kind("rank")]}))


def cmd_bin(cfg, args):
    sites = read_site_dir(args.site_dir)
    cuts = _federated(cfg, sites).cutoffs()
    _write(cfg.out, _json({"format_version": 1, **cuts.to_dict()}))


def _load_cutoffs(path) -> binning.CutoffSet:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    d.pop("format_version", None)
    return binning.CutoffSet.from_dict(d)


def cmd_fit(cfg, args):
    sites = read_site_dir(args.site_dir)
    arm = _federated(cfg, sites)
    cuts = _load_cutoffs(args.cutoffs)
    arm._cutoffs = cuts  # reuse previously federated cutoffs instead of recomputing
    variables = tuple(v.strip() for v in args.variables.split(",") if v.strip())
    unknown = [v for v in variables if v not in sites[0].schema.names]
    if unknown:
        raise ConfigError(f"unknown variable(s): {unknown}")
    cand = arm.fit_candidate(variables)
    out = Path(cfg.out)
    _write(out / "model.json", _json({
        "format_version": 1, "variables": list(variables), "columns": cand.encoding.columns,
        "beta": [float(b) for b in cand.beta],
    }))
    _write(out / "scorecard.json", cand.card.to_json() + "\n")
    _write(out / "transcript.json", _json(arm.fit_transcripts[variables].to_dict()))


def cmd_select(cfg, args):
    with open(args.curve, encoding="utf-8") as fh:
        curve = ParsimonyCurve.from_dict(json.load(fh))
    eps = cfg.epsilon if args.epsilon is not None else curve.epsilon
    p = select_model(curve, eps)
    text = _json({"format_version": 1, "m": p.m, "variables": list(p.variables), "psi": p.psi,
                  "epsilon": eps})
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)


def cmd_evaluate(cfg, args):
    sites = read_site_dir(args.site_dir)
    arm = _federated(cfg, sites)
    arm._cutoffs = _load_cutoffs(args.cutoffs)
    with open(args.scorecard, encoding="utf-8") as fh:
        card = ScoreCard.from_dict(json.load(fh))
    _write(cfg.out, _json(arm.evaluate(card).to_dict()))


def cmd_run(cfg, args):
    run_experiment(cfg).write(cfg.out)


def cmd_plot(cfg, args):
    with open(args.curve, encoding="utf-8") as fh:
        curve = ParsimonyCurve.from_dict(json.load(fh))
    out = args.out or str(Path(args.curve).with_suffix(".svg"))
    plot_parsimony(curve, out)


COMMANDS = {
    "synth": cmd_synth, "partition": cmd_partition, "rank": cmd_rank, "bin": cmd_bin,
    "fit": cmd_fit, "select": cmd_select, "evaluate": cmd_evaluate, "run": cmd_run, "plot": cmd_plot,
}

_DEFAULT_OUT = {"rank": "ranking.json", "bin": "cutoffs.json", "fit": "fit", "evaluate": "evaluation.json",
                "synth": "synthetic", "partition": "sites"}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, ProtocolError)):
        return EXIT_DATA
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, OSError):
        return EXIT_IO
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    stage = "config"
    try:
        if args.out is None and args.command in _DEFAULT_OUT:
            args.out = _DEFAULT_OUT[args.command]
        cfg = resolve_config(args)
        stage = args.command
        COMMANDS[args.command](cfg, args)
    except (FedScoreError, OSError) as exc:
        print(f"fedscore {stage}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
