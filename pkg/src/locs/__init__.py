"""Roto-translation equivariant trajectory forecasting with local coordinate frames."""
from .datasets import DatasetBundle, DatasetFormatError, read_dataset, write_dataset
from .estimators import ConstantVelocityForecaster, LoCSForecaster
from .harness import MetricsReport, ablate, evaluate, train
from .model import LoCS, ModelConfig
from .normalization import MinMaxNormalizer, NormSpec, SpeedNormalizer
from .simulate import ChargedConfig, SyntheticConfig, gen_charged, gen_synthetic
from .training import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "DatasetBundle", "DatasetFormatError", "read_dataset", "write_dataset",
    "ConstantVelocityForecaster", "LoCSForecaster", "MetricsReport", "ablate", "evaluate", "train",
    "LoCS", "ModelConfig", "MinMaxNormalizer", "NormSpec", "SpeedNormalizer",
    "ChargedConfig", "SyntheticConfig", "gen_charged", "gen_synthetic", "TrainConfig",
]
