"""Zero-shot minimax aggregation of off-the-shelf attack detectors."""

from multiarm.capacity import (
    DetectorBank,
    MixtureWeights,
    SoftDecision,
    SolverConfig,
    SolverResult,
    decide,
    kl_divergence,
    mixture,
    mutual_information,
    solve_batch,
    solve_weights,
    worst_case_regret,
)
from multiarm.ingest import GroupManifest, ScoreTable, bank_for, load_manifest, load_scores, write_scores
from multiarm.metrics import MetricsReport, auroc, evaluate_group, fpr_at_tpr, group_score, roc_curve

__version__ = "0.1.0"
