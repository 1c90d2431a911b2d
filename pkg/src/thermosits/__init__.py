"""Thermal-time positional encodings for SITS crop classification.

Library layout:

    autodiff     float64 tensors with reverse-mode differentiation
    optim        Adam (decoupled weight decay) and cosine annealing
    checkpoint   binary array container with a JSON header
    thermal      growing-degree-day timelines from daily temperatures
    encodings    sinusoidal / Fourier / recurrent positional encoders
    model        pixel-set encoder + master-query temporal attention
    synthgen     multi-region synthetic phenology generator
    dataset      parcel dataset container and file formats
    metrics      confusion-matrix metrics and evaluation reports
    experiment   training loop and leave-one-region-out benchmark
    cli          command-line entry point (`thermosits ...`)
"""

from .autodiff import Tensor
from .thermal import TemperatureSeries, ThermalConfig, ThermalTimeline, accumulate, gdd_at_days
from .encodings import PositionSequence, SinusoidalConfig, sinusoidal_encode, make_positions
from .model import Model, ModelConfig, PixelSetBatch, VARIANTS, build_model
from .dataset import Dataset, ParcelSample, load_dataset
from .synthgen import ClimateModel, CropPrototype, DatasetSpec, RegionSpec, gen_dataset
from .metrics import EvalReport, confusion_matrix
from .experiment import TrainConfig, evaluate, leave_one_region_out, train

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "TemperatureSeries",
    "ThermalConfig",
    "ThermalTimeline",
    "accumulate",
    "gdd_at_days",
    "PositionSequence",
    "SinusoidalConfig",
    "sinusoidal_encode",
    "make_positions",
    "Model",
    "ModelConfig",
    "PixelSetBatch",
    "VARIANTS",
    "build_model",
    "Dataset",
    "ParcelSample",
    "load_dataset",
    "ClimateModel",
    "CropPrototype",
    "DatasetSpec",
    "RegionSpec",
    "gen_dataset",
    "EvalReport",
    "confusion_matrix",
    "TrainConfig",
    "evaluate",
    "leave_one_region_out",
    "train",
    "__version__",
]
