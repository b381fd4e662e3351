"""
Federated variable ranking and unified cutoffs
==============================================

Each site ranks its variables with a random forest and shares only the
ranks.  The weighted rank sums give one global order.  Continuous variables
are then cut at federated quantiles so that every site bins identically.

Run:  python demos/ranking_and_binning.py
"""

import numpy as np

from fedscore import binning, ranking
from fedscore.data import FederationConfig, generate_synthetic, partition_sites, split_train_valid_test
from fedscore.experiment import DEFAULT_BETA, DEFAULT_PLAN
from fedscore.forest import ForestParams

cohort = split_train_valid_test(generate_synthetic(12_000, DEFAULT_BETA, DEFAULT_PLAN, seed=2), seed=2)
fed = FederationConfig(K=4, proportions=(0.1, 0.2, 0.3, 0.4), seed=2)
sites = partition_sites(cohort, fed)
weights = fed.weights([s.n for s in sites])

locals_ = [ranking.forest_importance(s, ForestParams(n_trees=40), seed=s.site_id) for s in sites]
print("site ranks (1 = most important)")
names = list(locals_[0].ranks)
print(" " * 11 + "".join(f"{'site ' + str(lr.site_id):>8}" for lr in locals_))
for v in names:
    print(f"{v:<11}" + "".join(f"{lr.ranks[v]:>8}" for lr in locals_))

g = ranking.aggregate_rankings(locals_, weights)
print("\nglobal order:", ", ".join(g.ordered))
print("what a site sends:", locals_[0].to_json()[:80], "...")

# quantiles per site, then a weighted average per slot
cfg = binning.BinningConfig()
payloads = [binning.cutoff_payload(s, cfg) for s in sites]
cuts = binning.federate_cutoffs(payloads, weights, cfg)
for v in ("age", "sbp", "spo2"):
    per_site = "  ".join(f"{p[v][1]:.1f}" for p in payloads)
    print(f"\n{v}: 20th percentile by site  {per_site}")
    print(f"{v}: unified cutoffs          {np.round(cuts.cutoffs[v], 2).tolist()}")
    print(f"{v}: labels                   {binning.interval_labels(cuts.cutoffs[v])}")

binned = binning.transform(sites[0], cuts)
print("\nsite 1 after binning, first rows of age:", binned.columns["age"][:5].tolist())
