from .base import SurrogateRegressor, family_of, load_model, make_model, save_model
from .gbt import GradientBoostedRegressor, RegressionTree
from .mlp import MLPRegressor, TrainingDivergedError
from .model_selection import (
    FAMILY_ORDER,
    CvReport,
    UndefinedScoreError,
    cross_validate,
    kfold_indices,
    r2_score,
    select_best,
    train_test_split,
)
from .scaler import StandardScaler
from .svr import EpsilonSVR

__all__ = [
    "CvReport",
    "EpsilonSVR",
    "FAMILY_ORDER",
    "GradientBoostedRegressor",
    "MLPRegressor",
    "RegressionTree",
    "StandardScaler",
    "SurrogateRegressor",
    "TrainingDivergedError",
    "UndefinedScoreError",
    "cross_validate",
    "family_of",
    "kfold_indices",
    "load_model",
    "make_model",
    "r2_score",
    "save_model",
    "select_best",
    "train_test_split",
]
