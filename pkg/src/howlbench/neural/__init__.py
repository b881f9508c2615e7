"""Neural howling suppressor: features, network forward pass, weight files."""

from .features import FeatureConfig, FeatureExtractor, extract_features
from .filters import RecursiveCovariance, covariance_features, deep_filter_apply
from .model import CHANNELS, Architecture, DeepAHSNet, identity_filter_params
from .suppressor import DeepAHS
from .weights import (ChecksumError, ModelWeights, ShapeMismatchError, TruncatedPayloadError,
                      UnknownTensorError, WeightsError, load_weights, random_init, save_weights)

__all__ = [
    "Architecture", "CHANNELS", "ChecksumError", "DeepAHS", "DeepAHSNet", "FeatureConfig",
    "FeatureExtractor", "ModelWeights", "RecursiveCovariance", "ShapeMismatchError",
    "TruncatedPayloadError", "UnknownTensorError", "WeightsError", "covariance_features",
    "deep_filter_apply", "extract_features", "identity_filter_params", "load_weights",
    "random_init", "save_weights",
]
