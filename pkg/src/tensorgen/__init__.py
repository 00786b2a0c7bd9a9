"""Synthetic binary datasets from naive Bayes mixtures learned by the method of moments."""

from .dataset import (
    BinaryDataset,
    CodeListRecord,
    binarize_code_list,
    load_code_list,
    load_csv,
    split_holdout,
    write_csv,
)
from .em import EmReport, em_refine
from .errors import (
    CompletionError,
    DeflationError,
    InputError,
    NumericalError,
    RankDeficiencyError,
    TensorGenError,
)
from .evaluate import EvalReport, classifier_two_sample_test, mmd_unbiased
from .forest import ForestSettings, fit_forest
from .model import (
    BaselineModel,
    NaiveBayesModel,
    fit_baseline,
    load_model,
    log_likelihood,
    sample,
    sample_baseline,
    save_model,
)
from .moments import MomentSet, complete_low_rank, estimate_moments
from .pipeline import FitOptions, FitResult, fit_tensorgen, spectral_fit
from .spectral import (
    EigenPair,
    WhiteningMap,
    recover_parameters,
    tensor_power_method,
    whiten,
    whitened_third_moment,
)

__version__ = "0.1.0"
