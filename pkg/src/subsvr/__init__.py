"""Randomized-subspace SVR ensembles for regression.

Fits an additive ensemble of low-dimensional epsilon-SVR submodels over
randomly drawn variable subsets, keeping subsets that reduce cross-validated
RMSE; hyperparameters are picked by a GCV grid search, and accepted subspaces
double as a variable/interaction importance report.
"""

__version__ = "0.1.0"

from .data import Dataset, NormalizationStats, SynthSpec, SynthTerm, generate_synthetic, load_csv, normalize
from .ensemble import EnsembleModel, finalize, load_model, save_model
from .errors import ConvergenceError, InputError, NumericError, SubsvrError
from .gcv import GcvVariant, HyperGrid, gcv_score, grid_search, smoother_traces
from .kernels import KernelSpec, default_kernel, kernel_eval, kernel_matrix
from .reporting import (
    EvaluationReport,
    FoldReport,
    VariableReport,
    extract_common_variables,
    outer_evaluate,
)
from .search import (
    FoldSplit,
    SearchConfig,
    SearchTrace,
    Subspace,
    cv_score,
    delta_e,
    draw_subspace,
    make_fold_split,
    run_search,
)
from .svr import SvrConfig, SvrModel, ridge_smoother, svr_fit, svr_predict

__all__ = [
    "__version__",
    "Dataset", "NormalizationStats", "SynthSpec", "SynthTerm", "generate_synthetic",
    "load_csv", "normalize",
    "EnsembleModel", "finalize", "load_model", "save_model",
    "ConvergenceError", "InputError", "NumericError", "SubsvrError",
    "GcvVariant", "HyperGrid", "gcv_score", "grid_search", "smoother_traces",
    "KernelSpec", "default_kernel", "kernel_eval", "kernel_matrix",
    "EvaluationReport", "FoldReport", "VariableReport", "extract_common_variables", "outer_evaluate",
    "FoldSplit", "SearchConfig", "SearchTrace", "Subspace", "cv_score", "delta_e",
    "draw_subspace", "make_fold_split", "run_search",
    "SvrConfig", "SvrModel", "ridge_smoother", "svr_fit", "svr_predict",
]
