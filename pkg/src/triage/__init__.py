"""Data characterization toolkit for tabular regression.

Scores every training sample with a conformal predictive distribution
evaluated at the sample's own label, tracks how that score evolves across
model checkpoints, and groups samples into under-, over- and well-estimated.
The groups drive downstream dataset work: filtering, sculpting against a
deployment calibration set, comparing candidate datasets, valuing feature
acquisition, and contamination audits.
"""

__version__ = "0.1.0"

from triage.dataset import (
    ContaminationSpec,
    Dataset,
    SplitSpec,
    StandardizationParams,
    contaminate,
    generate_linear_synthetic,
    load_csv,
    split,
    standardize_apply,
    standardize_fit,
    standardize_invert,
    write_csv,
)
from triage.regressors import (
    CheckpointedRun,
    DivergenceError,
    TrainingConfig,
    final_residuals,
    fit_feedforward,
    fit_gbdt,
    fit_linear_sgd,
    fit_regressor,
    loss_trajectory,
    predict,
)
from triage.conformal import (
    ConformalCalibrator,
    SigmaEstimator,
    Tau,
    conformity,
    cpd_eval,
    cpd_quantile,
    crps,
    fit_calibrator,
    fit_sigma,
    triage_score,
)
from triage.dynamics import (
    ScoreTrajectory,
    TrajectoryStats,
    confidence,
    score_all,
    summarize,
    variability,
)
from triage.characterize import (
    CharacterizationConfig,
    CharacterizationReport,
    Group,
    assign_groups,
    retention_rate,
    threshold_sweep,
)

__all__ = [name for name in dir() if not name.startswith("_")]
