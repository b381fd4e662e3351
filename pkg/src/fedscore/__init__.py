"""Federated integer risk scorecards built without pooling row-level data."""

__version__ = "0.1.0"

from .binning import BinningConfig, CutoffSet, federate_cutoffs, local_cutoffs, transform
from .data import (
    FederationConfig,
    Schema,
    SiteDataset,
    VariableSpec,
    generate_synthetic,
    load_csv,
    partition_sites,
    split_train_valid_test,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    FedScoreError,
    NumericalError,
    ProtocolError,
    QuasiSeparationError,
    SingleClassError,
)
from .evaluation import (
    EvaluationReport,
    ParsimonyCurve,
    auc,
    auc_ci,
    parsimony_sweep,
    select_model,
    weighted_metrics,
)
from .glm import encode, fit_mle
from .protocol import run_one_shot
from .ranking import GlobalRanking, LocalRanking, aggregate_rankings, forest_importance
from .scorecard import ScoreCard, derive_points

__all__ = [
    "BinningConfig", "CutoffSet", "federate_cutoffs", "local_cutoffs", "transform",
    "FederationConfig", "Schema", "SiteDataset", "VariableSpec", "generate_synthetic", "load_csv",
    "partition_sites", "split_train_valid_test",
    "ConfigError", "ConvergenceError", "DataError", "FedScoreError", "NumericalError",
    "ProtocolError", "QuasiSeparationError", "SingleClassError",
    "EvaluationReport", "ParsimonyCurve", "auc", "auc_ci", "parsimony_sweep", "select_model",
    "weighted_metrics", "encode", "fit_mle", "run_one_shot",
    "GlobalRanking", "LocalRanking", "aggregate_rankings", "forest_importance",
    "ScoreCard", "derive_points",
]
