"""Confidence-regularized sample sieve for learning with noisy labels.

Submodules: ``datagen`` (synthetic data and label noise), ``model``
(numpy classifiers and SGD), ``loss``, ``sieve``, ``consistency``,
``theory`` (exact oracles on enumerable worlds), ``metrics``, ``config``
and ``cli``.
"""
from .config import RunConfig, load_config
from .consistency import run_cores_star
from .datagen import DiscreteWorld, LabeledDataset, NoiseSpec, corrupt, make_blobs
from .loss import BetaSchedule, NoisyPrior
from .metrics import sieve_report, test_accuracy
from .model import Classifier, OptimizerConfig, init_classifier
from .sieve import SieveState, run_cores

__version__ = "0.1.0"

__all__ = [
    "BetaSchedule", "Classifier", "DiscreteWorld", "LabeledDataset", "NoiseSpec", "NoisyPrior",
    "OptimizerConfig", "RunConfig", "SieveState", "corrupt", "init_classifier", "load_config",
    "make_blobs", "run_cores", "run_cores_star", "sieve_report", "test_accuracy",
]
