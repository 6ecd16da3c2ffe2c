from .config import ModelConfig, VariantName, REDUCED_FEATURES
from .etlnet import Model, build_model, forward, backward, count_params, variant_catalog
from .checkpoint import save_checkpoint, load_checkpoint
from . import model_service
