"""Multi-modal temporal graph forecasting of daily case counts."""

from .errors import ConfigError, ForecastError, IngestionError, NumericError
from .model import ModelConfig, init_model
from .synth import SynthConfig, synth_generate
from .training import TrainConfig, train

__all__ = ["ConfigError", "ForecastError", "IngestionError", "NumericError", "ModelConfig", "init_model",
           "SynthConfig", "synth_generate", "TrainConfig", "train"]
__version__ = "0.1.0"
