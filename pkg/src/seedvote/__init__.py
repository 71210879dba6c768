"""Recover annotator label distributions from single aggregated labels with seed ensembles."""

from seedvote.data import EMOTIONS, AnnotationRecord, LabeledExample, Sample, aggregate_gold, make_folds
from seedvote.encoder import EncoderConfig, encode_hashed
from seedvote.ensemble import (
    EnsembleConfig,
    EnsembleModel,
    FeatureDataset,
    ModelConfig,
    predict,
    recover_distribution,
    run_model,
    train_ensemble,
)
from seedvote.errors import InputError
from seedvote.heads import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "EMOTIONS",
    "AnnotationRecord",
    "EncoderConfig",
    "EnsembleConfig",
    "EnsembleModel",
    "FeatureDataset",
    "InputError",
    "LabeledExample",
    "ModelConfig",
    "Sample",
    "TrainConfig",
    "aggregate_gold",
    "encode_hashed",
    "make_folds",
    "predict",
    "recover_distribution",
    "run_model",
    "train_ensemble",
]
