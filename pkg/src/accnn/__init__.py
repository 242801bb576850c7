"""Scale-adaptive density-map crowd counting with fuzzy hyper-parameter selection."""

from .density import (
    GaussianSpec,
    PointAnnotation,
    count_from_density,
    gaussian_kernel,
    ground_truth_density,
    mae,
)
from .fuzzy import FuzzyConfig, FuzzyRule, HPLevel, LinguisticTerm, select_level
from .headsize import OracleEstimator, PerspectiveEstimator
from .pipeline import AdaptiveCrowdCounter, ModelBank, count_image, train_bank, train_fixed_bank
from .regressor import DEFAULT_HP_CONFIGS, HPConfig, PatchRegressor, TrainParams
from .synth import SynthSceneParams, gen_synthetic_scene

__version__ = "0.1.0"
