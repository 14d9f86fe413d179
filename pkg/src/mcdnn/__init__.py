"""Micro-clustering deep neural network forecasting of BEV charging levels."""

from .dataset import ChargeLevel, Dataset, SynthConfig, generate_synthetic, load_csv, split_dataset, write_csv
from .errors import FidelityError, TrainingError, ValidationError
from .metrics import evaluate
from .pipeline import PipelineConfig, predict_mc_dnn, run_benchmark, train_mc_dnn

__version__ = "0.1.0"

__all__ = [
    "ChargeLevel",
    "Dataset",
    "SynthConfig",
    "generate_synthetic",
    "load_csv",
    "write_csv",
    "split_dataset",
    "evaluate",
    "PipelineConfig",
    "train_mc_dnn",
    "predict_mc_dnn",
    "run_benchmark",
    "FidelityError",
    "TrainingError",
    "ValidationError",
]
