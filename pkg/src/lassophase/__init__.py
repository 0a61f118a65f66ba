"""Asymptotic lasso risk and phase transitions under correlated Gaussian designs.

The library predicts the high-dimensional behavior of the lasso when design
rows are drawn from N(0, Sigma): the effective-noise fixed point and the
alpha <-> lambda calibration (state_evolution), the asymptotic MSE, the
sparsity/undersampling recovery boundary delta_c (phase), an AMP solver whose
fixed points are lasso optima (amp), and finite-p Monte-Carlo harnesses that
check all of it (montecarlo). covariance/prox/lasso hold the shared
numerical core.
"""

from .amp import AmpState, AmpTrace, amp_fixed_point_lambda, amp_run
from .covariance import CovarianceModel, CovarianceSpec, build, factor_sqrt, schur_complement
from .errors import (
    CalibrationError,
    ConvergenceError,
    DefinitenessError,
    DivergenceError,
    FitError,
    FixedPointError,
    IllConditioningError,
    LassoPhaseError,
    ParameterError,
    PhaseEstimateError,
)
from .lasso import BasisPursuitResult, LassoSolution, basis_pursuit, lasso_path, solve_lasso
from .montecarlo import (
    Instance,
    TransitionFit,
    empirical_transition,
    extrapolate_limit,
    logistic_fit,
    mse_experiment,
    sample_instance,
    sample_signal,
)
from .phase import (
    PhasePoint,
    delta_c,
    identity_delta_c,
    identity_m,
    identity_phase_curve,
    m_estimate,
)
from .priors import MagnitudeLaw, SignalPrior, expected_weighted_norm_sq
from .prox import ActiveSet, ProxResult, divergence, prox_weighted_l1
from .state_evolution import (
    MCConfig,
    SEPoint,
    alpha_min,
    calibrate_lambda,
    fixed_point_tau,
    invert_calibration,
    lasso_risk,
    psi,
    risk_curve,
    tau_sequence,
)

__version__ = "0.1.0"
