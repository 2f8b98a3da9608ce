"""Low-rank positive semidefinite matrix completion via factored gradient
methods, with endpoint certification and concentration experiments.

The package builds symmetric observation instances, evaluates a regularized
least-squares objective over factor matrices, runs first-order solvers
(Armijo gradient descent, minibatch SGD, perturbed gradient descent),
classifies solver endpoints using gradient and Hessian information, and
measures how sampled-deviation statistics scale with the observation rate.
"""

from .certify import (
    CertReport,
    CertTolerances,
    PointClass,
    RecoveryError,
    ScanRow,
    ScanSummary,
    certify_point,
    incoherence_certificate,
    landscape_scan,
    norm_certificates,
    recovery_error,
    scan_to_csv,
)
from .concentration import (
    ConcentrationTrial,
    Kind,
    ScalingFit,
    TrialRecord,
    TrialResult,
    fit_scaling,
    row_incoherence,
    run_concentration,
    trials_to_csv,
)
from .instance import (
    GroundTruth,
    HyperParams,
    InstanceSpec,
    Observation,
    default_hyperparams,
    observe,
    sample_factor,
    sample_mask,
)
from .linalg import (
    MatrixNorms,
    ObservationMask,
    ProcrustesResult,
    SingularExtremes,
    empty_mask,
    full_mask,
    matrix_norms,
    procrustes_align,
    project_mask,
    singular_extremes,
    spectral_norm,
)
from .objective import (
    EigResult,
    EvalBreakdown,
    ObjectiveConfig,
    gradient,
    hessian_quadratic,
    hessian_vecprod,
    min_hessian_eig,
    objective,
    operator_norm_estimate,
    reg_gradient,
    regularizer,
)
from .rng import derive_seed, substream
from .solvers import (
    ArmijoParams,
    Method,
    PerturbParams,
    SgdParams,
    SolveResult,
    SolverConfig,
    Status,
    Trace,
    gradient_descent,
    perturbed_gd,
    random_init,
    sgd,
    solve,
    stochastic_gradient,
    trace_to_csv,
)

__version__ = "0.1.0"

__all__ = [
    "ArmijoParams",
    "CertReport",
    "CertTolerances",
    "ConcentrationTrial",
    "EigResult",
    "EvalBreakdown",
    "GroundTruth",
    "HyperParams",
    "InstanceSpec",
    "Kind",
    "MatrixNorms",
    "Method",
    "ObjectiveConfig",
    "Observation",
    "ObservationMask",
    "PerturbParams",
    "PointClass",
    "ProcrustesResult",
    "RecoveryError",
    "ScalingFit",
    "ScanRow",
    "ScanSummary",
    "SgdParams",
    "SingularExtremes",
    "SolveResult",
    "SolverConfig",
    "Status",
    "Trace",
    "TrialRecord",
    "TrialResult",
    "certify_point",
    "default_hyperparams",
    "derive_seed",
    "empty_mask",
    "fit_scaling",
    "full_mask",
    "gradient",
    "gradient_descent",
    "hessian_quadratic",
    "hessian_vecprod",
    "incoherence_certificate",
    "landscape_scan",
    "matrix_norms",
    "min_hessian_eig",
    "norm_certificates",
    "objective",
    "observe",
    "operator_norm_estimate",
    "perturbed_gd",
    "procrustes_align",
    "project_mask",
    "random_init",
    "recovery_error",
    "regularizer",
    "reg_gradient",
    "row_incoherence",
    "run_concentration",
    "sample_factor",
    "sample_mask",
    "scan_to_csv",
    "sgd",
    "singular_extremes",
    "solve",
    "spectral_norm",
    "stochastic_gradient",
    "substream",
    "trace_to_csv",
    "trials_to_csv",
]
