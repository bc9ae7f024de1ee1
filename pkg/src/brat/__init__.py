"""Boulevard-regularized boosting with built-in frequentist uncertainty
quantification: dropout and parallel training loops whose averaged updates
converge to a kernel ridge regression, plus the interval and hypothesis
machinery that convergence buys."""

from .boost import BoostParams, BratModel, fixed_point_oracle, train, train_brat_d, train_brat_p, truncate
from .data import Dataset, SplitSpec, gen_friedman, gen_sine_quadratic, gen_vi, load_csv, split
from .errors import ConfigError, DataError, NumericalError
from .infer import (
    Interval,
    NoiseEstimate,
    ViTestResult,
    calibrate_widths,
    confidence_interval,
    estimate_sigma,
    prediction_interval,
    reproduction_interval,
    variable_importance_test,
)
from .kernel import (
    KernelEstimate,
    KrrWeights,
    NystromSketch,
    estimate_K_matrix,
    estimate_k_vec,
    krr_weights_d,
    krr_weights_p,
    nystrom_build,
    sketched_predict,
    sketched_r_norm,
)
from .trees import (
    RegressionTree,
    TreeParams,
    clone_structure_refit,
    fit_tree,
    predict_tree,
    refit_leaf_values,
    structure_vector,
)

__version__ = "0.1.0"
