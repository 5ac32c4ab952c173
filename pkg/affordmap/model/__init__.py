from affordmap.model.config import ModelConfig
from affordmap.model.layers import FeatureTokens, MaskQuery
from affordmap.model.network import AffordanceModel, Generation, GenerationStats
from affordmap.model.checkpoint import load_checkpoint, save_checkpoint


__all__ = [
    "ModelConfig", "FeatureTokens", "MaskQuery", "AffordanceModel",
    "Generation", "GenerationStats", "load_checkpoint", "save_checkpoint",
]
