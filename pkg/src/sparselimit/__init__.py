"""Sparse-limit signal models: exceedance measures, zeta transforms and first-order inference."""

__version__ = "0.1.0"

from .measures import (
    BracketError,
    Custom,
    ExceedanceMeasure,
    ExponentialTail,
    InversePower,
    InverseQuartic,
    LaplaceLasso,
    SlabDerived,
    SlabDistribution,
    activity_index,
    exceedance_mass,
    measure_from_json,
    scale_family_rate,
    slab_activity_factor,
    unit_constant,
)
from .zeta import ZetaEvaluator, tabulated_log_zeta
from .densities import (
    CMModel,
    HyperModel,
    cm_add_noise,
    convolution_mixture_params,
    hyper_marginal_density,
    marginal_density,
    psi_cf,
    psi_density,
    quantile,
    sample_cm,
    sample_psi,
)
from .conditional import (
    activity_prob,
    bh_ratio,
    bh_threshold,
    cond_mgf,
    conditional_decomposition,
    hyper_tweedie_mean,
    local_fpr_bound,
    tweedie_moment,
)
from .fit import FitResult, fit_cm, fit_laplace_zeta, fit_rho_d, loglik_rho_d, rho_from_origin
from .simulate import SignalSpec, efron_signals, exceedance_check, observe, sample_signal
