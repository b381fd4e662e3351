"""
Local, federated and pooled scores side by side
===============================================

A small version of the full experiment: every site builds its own score,
the sites build one together, and a pooled score serves as the reference.
All of them are tested on every site's held-out rows.

Run:  python demos/three_arm_experiment.py   (writes demo_bundle/)
"""

from fedscore.experiment import ExperimentConfig, run_experiment

cfg = ExperimentConfig(n=12_000, sites=5, seed=11, n_trees=50, out="demo_bundle")
bundle = run_experiment(cfg)
bundle.write(cfg.out)

report = bundle.files["report.md"]
print(report.split("## Scorecards")[0])

summary = bundle.json("summary.json")["arms"]
fed, pooled = summary["federated"], summary["pooled"]
print(f"federated M1 {fed['M1']:.4f} vs pooled {pooled['M1']:.4f}")
print("bundle files:", len(bundle.files), "->", cfg.out)
