"""autofuse: automated multimodal ML over tabular features and embeddings.

Searches full tabular pipelines and embedding heads, integrates them with
late, early, and joint fusion, ensembles the best of every strategy with
optimized simplex weights, and wraps the result with conformal prediction
sets, selective-acquisition analysis, and feature attribution.
"""

__version__ = "0.1.0"

from .conformal import (
    AcquisitionCurve,
    ConformalCalibration,
    ConformalConfig,
    acquisition_curve,
    acquisition_curve_from_predictors,
    calibrate,
    coverage,
    fit_conformal,
    predict_set,
    raps_score,
)
from .data import (
    DatasetManifest,
    MultimodalDataset,
    TabularSchema,
    encode_tabular,
    fit_schema,
    load_dataset,
    load_manifest,
)
from .fusion import (
    EarlyFusionModel,
    JointFusionModel,
    LateFusionModel,
    Modalities,
    fit_early_fusion,
    fit_joint_fusion,
    fit_late_fusion,
    predict_late,
)
from .metrics import auroc, confusion_metrics, log_loss, permutation_importance
from .nn import MlpParams, TrainConfig, integrated_gradients, mlp_forward, mlp_gradients, train_mlp
from .search import (
    Leaderboard,
    MultistrategyEnsemble,
    SearchSpace,
    StrategyEnsemble,
    optimize_simplex_weights,
    run_search,
    sample_config,
)
from .splits import FoldSplit, grouped_stratified_kfold, make_folds, split_train_valid
from .strategies import build_multistrategy_ensemble, default_spaces
from .synthetic import make_synthetic
from .tabular import Imputer, MlpClassifier, PCAReducer, Scaler, TabularPipeline
from .trees import GradientBoosting, RandomForest

__all__ = [
    "AcquisitionCurve",
    "ConformalCalibration",
    "ConformalConfig",
    "DatasetManifest",
    "EarlyFusionModel",
    "FoldSplit",
    "GradientBoosting",
    "Imputer",
    "JointFusionModel",
    "LateFusionModel",
    "Leaderboard",
    "MlpClassifier",
    "MlpParams",
    "Modalities",
    "MultimodalDataset",
    "MultistrategyEnsemble",
    "PCAReducer",
    "RandomForest",
    "Scaler",
    "SearchSpace",
    "StrategyEnsemble",
    "TabularPipeline",
    "TabularSchema",
    "TrainConfig",
    "acquisition_curve",
    "acquisition_curve_from_predictors",
    "auroc",
    "build_multistrategy_ensemble",
    "calibrate",
    "confusion_metrics",
    "coverage",
    "default_spaces",
    "encode_tabular",
    "fit_conformal",
    "fit_early_fusion",
    "fit_joint_fusion",
    "fit_late_fusion",
    "fit_schema",
    "grouped_stratified_kfold",
    "integrated_gradients",
    "load_dataset",
    "load_manifest",
    "log_loss",
    "make_folds",
    "make_synthetic",
    "mlp_forward",
    "mlp_gradients",
    "optimize_simplex_weights",
    "permutation_importance",
    "predict_late",
    "predict_set",
    "raps_score",
    "run_search",
    "sample_config",
    "split_train_valid",
    "train_mlp",
]
