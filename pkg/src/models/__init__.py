"""
Models package: the three classifier architectures and prediction helpers.
"""
from src.models.builders import (
    MODEL_NAMES,
    ModelSpec,
    build_deepconvlstm,
    build_model,
    build_sahar,
    build_tinyhar,
    load_model,
)
from src.models.predict import predict_trial, predict_window

__all__ = ["MODEL_NAMES", "ModelSpec", "build_deepconvlstm", "build_model", "build_sahar",
           "build_tinyhar", "load_model", "predict_trial", "predict_window"]
