"""Direction decoders, their training loop and prediction."""

from .architectures import (
    DirectionDecoder,
    FusionBlock,
    LearnableSpatialMapping,
    LsmConfig,
    ModelKind,
    ModelSpec,
    build_model,
)
from .training import AccessAudit, FoldData, TestAccessError, TrainResult, evaluate_split, predict, train_fold
