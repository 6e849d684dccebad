"""Machine-unlearning privacy audit: MLP engine, unlearning algorithms,
shadow-model membership inference, and an experiment harness."""

from .data_pipeline import Dataset, SplitBundle, SplitPlan, SyntheticSpec
from .harness import ExperimentConfig, ExperimentReport, SweepReport
from .mia_engine import AttackReport, ShadowEnsemble
from .nn_core import EpochMetrics, GradientSet, MlpModel, TrainConfig
from .unlearn_engine import NegGrad, Scrub, Sftc, UnlearnTrace

__version__ = "0.1.0"

__all__ = [
    "AttackReport",
    "Dataset",
    "EpochMetrics",
    "ExperimentConfig",
    "ExperimentReport",
    "GradientSet",
    "MlpModel",
    "NegGrad",
    "Scrub",
    "Sftc",
    "ShadowEnsemble",
    "SplitBundle",
    "SplitPlan",
    "SweepReport",
    "SyntheticSpec",
    "TrainConfig",
    "UnlearnTrace",
]
