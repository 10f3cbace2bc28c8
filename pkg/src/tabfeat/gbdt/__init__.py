"""Self-contained histogram gradient-boosted trees."""
from .binning import BinMapper
from .model import (STAGE1_PARAMS, STAGE2_PARAMS, BoostModel, BoostParams, Tree, mdi,
                    predict, train)
from .objectives import Objective, base_score, gradients, loss, pointwise_loss

__all__ = [
    "BinMapper", "BoostModel", "BoostParams", "Objective", "STAGE1_PARAMS",
    "STAGE2_PARAMS", "Tree", "base_score", "gradients", "loss", "mdi",
    "pointwise_loss", "predict", "train",
]
