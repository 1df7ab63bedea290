"""Kernel-based conditional density estimation with iterated and closed-form
regularisation, baseline smoothers, and a Monte-Carlo benchmark harness."""

from .datagen import (
    GroundTruth,
    ModelSpec,
    SplitData,
    aux_support,
    even_aux,
    gen_ar,
    gen_beta,
    gen_cir,
    gen_mixture,
    generate,
    load_csv,
    make_model,
    ncx2_pdf,
    sample_aux,
)
from .estimators import (
    CDOConditionalDensity,
    FittedCDE,
    GRSConditionalDensity,
    KernelMeanConditionalDensity,
    NadarayaWatsonConditionalDensity,
    cdo_eval,
    cdo_fit,
    grs_eval,
    kmd_eval,
    kmd_fit,
    normalize_slice,
    nw_fit,
    nw_fit_eval,
)
from .harness import (
    DEFAULT_ESTIMATORS,
    ExperimentConfig,
    MCSummary,
    mse_score,
    run_experiment,
    run_replication,
)
from .kernels import (
    BandwidthGrid,
    GramFactors,
    KernelConfig,
    build_gram,
    gaussian_kx,
    gaussian_ky,
    kappa_sq,
    kx_cross,
    ky_cross,
    median_heuristic,
)
from .operators import (
    AuxiliaryGrid,
    CoefficientRep,
    FitContext,
    NodeGrid,
    PairedDataset,
    apply_Lhat,
    bhat_matrix,
    dhat,
    eval_at_nodes,
    eval_rep,
    inner_emp,
    residual_hnorm_sq,
    znorm_sq,
)
from .regularizers import (
    LandweberState,
    ResidualConverged,
    StepPolicy,
    landweber_init,
    landweber_path,
    landweber_step,
    step_delta1,
    step_delta2,
    tikhonov_fit,
)
from .selection import SELECTION_KINDS, Grids, HyperGrid, SelectionResult, build_grids, select

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "AuxiliaryGrid",
    "BandwidthGrid",
    "CDOConditionalDensity",
    "CoefficientRep",
    "DEFAULT_ESTIMATORS",
    "ExperimentConfig",
    "FitContext",
    "FittedCDE",
    "GRSConditionalDensity",
    "GramFactors",
    "Grids",
    "GroundTruth",
    "HyperGrid",
    "KernelConfig",
    "KernelMeanConditionalDensity",
    "LandweberState",
    "MCSummary",
    "ModelSpec",
    "NadarayaWatsonConditionalDensity",
    "NodeGrid",
    "PairedDataset",
    "ResidualConverged",
    "SELECTION_KINDS",
    "SelectionResult",
    "SplitData",
    "StepPolicy",
    "apply_Lhat",
    "aux_support",
    "bhat_matrix",
    "build_gram",
    "build_grids",
    "cdo_eval",
    "cdo_fit",
    "dhat",
    "eval_at_nodes",
    "eval_rep",
    "even_aux",
    "gaussian_kx",
    "gaussian_ky",
    "gen_ar",
    "gen_beta",
    "gen_cir",
    "gen_mixture",
    "generate",
    "grs_eval",
    "inner_emp",
    "kappa_sq",
    "kmd_eval",
    "kmd_fit",
    "kx_cross",
    "ky_cross",
    "landweber_init",
    "landweber_path",
    "landweber_step",
    "load_csv",
    "make_model",
    "median_heuristic",
    "mse_score",
    "ncx2_pdf",
    "normalize_slice",
    "nw_fit",
    "nw_fit_eval",
    "residual_hnorm_sq",
    "run_experiment",
    "run_replication",
    "sample_aux",
    "select",
    "step_delta1",
    "step_delta2",
    "tikhonov_fit",
    "znorm_sq",
]
