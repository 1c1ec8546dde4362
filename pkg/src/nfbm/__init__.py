"""Kernels, covariances, simulation, prediction and likelihoods for the nth-order fBm."""

from .covariance import (
    NormalizationMode,
    cov_matrix,
    fbm_cov,
    nfbm_cov_closed,
    nfbm_cov_quadrature,
    nfbm_var,
    reconciliation_factor,
)
from .equivalence import (
    DriftModel,
    hitsuda_transform,
    log_likelihood,
    nfbm_equivalent_path,
    recover_drift,
    resolvent,
)
from .errors import (
    AccuracyError,
    ConditioningError,
    ConvergenceError,
    DomainError,
    EmbeddingError,
    NumericalError,
    PreconditionError,
    RoughnessError,
    SingularMatrixError,
    UnsupportedOrderError,
)
from .kernels import (
    Grid,
    HurstOrder,
    KernelMatrix,
    cell_integral,
    invert_kernel_matrix,
    kernel_matrix,
    load_kernel_matrix,
    mg_kernel,
    mg_kernel_dt,
    nfbm_kernel,
    save_kernel_matrix,
)
from .prediction import (
    ConditionalLaw,
    gaussian_conditioning_oracle,
    predict,
    predict_functional,
    predict_functional_multi,
)
from .simulation import (
    Method,
    RngStream,
    SamplePath,
    differentiate_path,
    integrate_path,
    simulate,
    simulate_cholesky,
    simulate_fft,
    simulate_fgn_fft,
    simulate_volterra,
    volterra_from_increments,
)
from .special import beta_fn, gamma_fn, gen_binom, mg_constant, perrin_constant
from .transfer import (
    StepFunction,
    dual_operator_fbm,
    dual_operator_nfbm,
    inner_product_H,
    l2_norm_sq,
    wiener_integral_nfbm,
)

__version__ = "0.1.0"
