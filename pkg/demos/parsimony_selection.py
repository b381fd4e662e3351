"""
Choosing how many variables to keep
===================================

Candidate models add variables in global-rank order.  Each one is fitted
through the one-shot protocol and scored on every site's validation rows.
The smallest model within epsilon of the best weighted AUC wins.

Run:  python demos/parsimony_selection.py   (writes parsimony.svg)
"""

from fedscore.evaluation import select_model
from fedscore.experiment import ExperimentConfig, prepare_sites
from fedscore.forest import ForestParams
from fedscore.pipeline import FederatedArm
from fedscore.plotting import plot_parsimony

cfg = ExperimentConfig(n=16_000, sites=5, seed=3)
sites = prepare_sites(cfg)
weights = cfg.federation().weights([s.rows("train").n for s in sites])
arm = FederatedArm(sites, weights, forest=ForestParams(n_trees=40), seed=cfg.seed)

curve = arm.sweep(d_max=8, epsilon=0.005)
for p in curve.points:
    psi = "skipped" if p.skipped else f"{p.psi:.4f}"
    print(f"m={p.m}  psi={psi:<8} {', '.join(p.variables)}")

best = select_model(curve)
print(f"\nselected m={best.m}; with epsilon=0 it would be m={select_model(curve, 0.0).m}")
print(arm.fit_candidate(best.variables).card.to_markdown())
print("plot:", plot_parsimony(curve, "parsimony.svg", title="Federated parsimony plot"))
