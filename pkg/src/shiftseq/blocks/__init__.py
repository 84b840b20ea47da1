"""Model architectures, presets, and checkpoint serialization."""

from .checkpoint import (
    CheckpointError,
    build_from_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from .model import (
    FAMILIES,
    MIXERS,
    NORMS,
    POS_MODES,
    PRESETS,
    AttentionLayer,
    BatchNormLayer,
    BiLstmLayer,
    ConvBlock,
    DepthwiseConvLayer,
    LayerNormLayer,
    LinearLayer,
    LstmBlock,
    ModelConfig,
    SequenceClassifier,
    TransformerBlock,
    build_model,
    config_from_dict,
    config_to_dict,
    preset_config,
    weighted_layer_sum,
)

__all__ = [
    "FAMILIES",
    "MIXERS",
    "NORMS",
    "POS_MODES",
    "PRESETS",
    "AttentionLayer",
    "BatchNormLayer",
    "BiLstmLayer",
    "CheckpointError",
    "ConvBlock",
    "DepthwiseConvLayer",
    "LayerNormLayer",
    "LinearLayer",
    "LstmBlock",
    "ModelConfig",
    "SequenceClassifier",
    "TransformerBlock",
    "build_from_checkpoint",
    "build_model",
    "config_from_dict",
    "config_to_dict",
    "load_checkpoint",
    "preset_config",
    "save_checkpoint",
    "weighted_layer_sum",
]
