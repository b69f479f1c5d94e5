"""Prompt-conditioned time-series forecasting at desk scale.

Classical analysis primitives feed four templated aspect prompts; a small
decoder-only transformer encodes each prompt into a single summary vector
and forecasts the series; a cross-modality alignment module fuses the two
sides. The experiment layer sweeps prompt combinations, alignment
strategies, encoder modes, and zero-shot transfer.
"""

from .core import (
    ForecastTask,
    Frequency,
    NormState,
    SplitSpec,
    TimeSeries,
    Window,
    chrono_split,
    denormalize,
    instance_normalize,
    load_csv,
)
from .model import AlignVariant, BackboneConfig, EncoderMode, Forecaster
from .patchcluster import ClusterIndex, PatchConfig
from .promptgen import BundleBuilder, DatasetCard, PromptBundle, PromptSettings, PromptVariant
from .tokenizer import load_tokenizer
from .train import TrainConfig, evaluate, repeat_runs, train_run

__all__ = [
    "AlignVariant",
    "BackboneConfig",
    "BundleBuilder",
    "ClusterIndex",
    "DatasetCard",
    "EncoderMode",
    "ForecastTask",
    "Forecaster",
    "Frequency",
    "NormState",
    "PatchConfig",
    "PromptBundle",
    "PromptSettings",
    "PromptVariant",
    "SplitSpec",
    "TimeSeries",
    "TrainConfig",
    "Window",
    "chrono_split",
    "denormalize",
    "evaluate",
    "instance_normalize",
    "load_csv",
    "load_tokenizer",
    "repeat_runs",
    "train_run",
]

__version__ = "0.1.0"
