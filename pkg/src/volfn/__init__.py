"""Estimation of integrated volatility functionals with sqrt(n) windows.

Estimates ``int_0^t g(c_s) ds`` for the spot covariance ``c`` of a
discretely observed Ito semimartingale, removes the four bias components of
the plug-in estimator and reports a feasible confidence interval.
"""

from .errors import ConfigError, DimensionError, NumericalError, VolfnError
from .estimators import (
    EstimateReport,
    a2_term,
    a3_term,
    border_term,
    confidence_interval,
    debiased_estimator,
    plugin_functional,
    variance_estimate,
)
from .harness import MCReport, run_estimate, run_mc
from .jumpfun import JumpDetection, jump_functional, jump_term, spot_deltas
from .simkit import (
    LimitTerms,
    ScenarioSpec,
    SimulatedPath,
    simulate_path,
    theoretical_limits,
    true_integrated_functional,
    true_jump_functional,
)
from .spotvol import (
    EstimatorConfig,
    ObservedSeries,
    Tuning,
    read_series_csv,
    spot_cov_at,
    spot_cov_series,
    validate_config,
    window_size,
    write_series_csv,
)
from .symfun import (
    MatrixFunctional,
    bias_kernel_G,
    bias_kernel_Gprime,
    bias_kernel_Gsecond,
    get_functional,
    h_from_g,
    hbar_from_g,
)

__version__ = "0.1.0"
