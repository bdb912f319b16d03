"""Model-brain alignment engine for image-evoked EEG.

Ridge encoding of EEG responses from layer-wise vision-model features, a
five-metric similarity battery (Pearson, Spearman, linear CKA, RSA,
Kendall), permutation significance testing, and batch analyses over a
manifest + NPY interchange format.
"""

__version__ = "0.1.0"

from .data_model import (
    CategoryLabels,
    Dataset,
    EEGEpochs,
    FeatureTensor,
    Montage,
    default_montage,
    load_dataset,
    load_npy,
    save_npy,
    validate_manifest,
)
from .encoder import (
    CVConfig,
    PreprocessPlan,
    RidgeFit,
    cv_encode,
    predict,
    ridge_solve,
    score_pearson_columns,
    select_alpha,
)
from .metrics import (
    RDM,
    compute_rdm,
    kendall_tau,
    linear_cka,
    pearson,
    rsa_score,
    spearman,
)
from .stats import (
    NullDistribution,
    RegressionResult,
    aggregate_subjects,
    ols_fit,
    permutation_null,
    significance_test,
)
from .synth import SynthSpec, gen_linear_dataset, gen_structured_epochs, rank_oracle

__all__ = [
    "CVConfig", "CategoryLabels", "Dataset", "EEGEpochs", "FeatureTensor",
    "Montage", "NullDistribution", "PreprocessPlan", "RDM", "RegressionResult",
    "RidgeFit", "SynthSpec", "aggregate_subjects", "compute_rdm", "cv_encode",
    "default_montage", "gen_linear_dataset", "gen_structured_epochs",
    "kendall_tau", "linear_cka", "load_dataset", "load_npy", "ols_fit",
    "pearson", "permutation_null", "predict", "rank_oracle", "ridge_solve",
    "rsa_score", "save_npy", "score_pearson_columns", "select_alpha",
    "significance_test", "spearman", "validate_manifest",
]
