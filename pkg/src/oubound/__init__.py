"""Berry-Esseen bounds for drift estimators of the Ornstein-Uhlenbeck process.

Exact simulation of coupled (X, Z) paths, the three discretized drift estimators,
exact Gaussian quadratic-form cumulants, empirical distances to the normal law and
the machinery that assembles them into rate experiments.
"""

from .bounds import (
    RATE_CURVES,
    BoundReport,
    ReportEntry,
    SlopeFit,
    bound_report,
    eval_rate,
    fit_loglog_slope,
)
from .distances import (
    KsResult,
    MichelPfanzaglResult,
    SampleEnsemble,
    WassersteinResult,
    dkw_radius,
    ks_statistic_vs_normal,
    michel_pfanzagl_bound,
    wasserstein_empirical_vs_normal,
)
from .errors import (
    DegenerateDenominatorError,
    DegenerateDesignError,
    ExactEngineSizeError,
    OracleSizeError,
    OuboundError,
    PlanError,
    UndefinedRateError,
)
from .estimators import (
    EstimateTriple,
    StatisticSet,
    amce,
    amle_bar,
    amle_hat,
    compute_statistics,
    estimate_all,
    normalized_error,
)
from .moments import (
    BoundComponents,
    CumulantSet,
    bound_components_for,
    fn_z_cumulants,
    isserlis_oracle,
    quadratic_form_cumulants,
    sample_cumulants,
)
from .montecarlo import EstimatorEnsemble, run_estimator_ensemble
from .plan import ExperimentPlan, load_plan, run_plan, validate_plan
from .process import (
    CovarianceMatrix,
    OuParams,
    SamplingGrid,
    build_stationary_covariance,
    build_x_covariance,
)
from .sampler import PathSample, RngStreamSpec, sample_coupled_paths

__version__ = "0.1.0"
