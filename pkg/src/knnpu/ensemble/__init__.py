"""Tree ensembles on sparse binary features: balanced random forest and
gradient-boosted trees, with MDI importances and a portable JSON format."""

from .model import (
    BoostParams,
    DecisionTree,
    FeatureImportances,
    ForestParams,
    TrainedModel,
    load_model,
    dumps_model,
    loads_model,
    mdi_importances,
    model_digest,
    predict_proba,
    save_model,
    write_importances_csv,
)
from .forest import class_blocks, train_balanced_forest
from .boosting import logistic_loss, train_boosted
from .train import train_classifier

__all__ = [
    "BoostParams",
    "DecisionTree",
    "FeatureImportances",
    "ForestParams",
    "TrainedModel",
    "class_blocks",
    "dumps_model",
    "load_model",
    "loads_model",
    "logistic_loss",
    "mdi_importances",
    "model_digest",
    "predict_proba",
    "save_model",
    "train_balanced_forest",
    "train_boosted",
    "train_classifier",
    "write_importances_csv",
]
