"""Integrated propensity score estimation.

Propensity and instrument-propensity models fitted by minimizing a
Cramer-von Mises distance that balances the whole covariate distribution,
with inverse-probability-weighted estimators of average, distributional and
quantile treatment effects (exogenous and instrumented designs), plug-in and
bootstrap inference, and a deterministic Monte Carlo study harness.
"""

from .balance import (
    BalanceState,
    LteBalanceState,
    balance_state,
    complier_mass,
    lte_balance_state,
)
from .data import Dataset, DesignSpec, design_matrix, load_csv, write_csv
from .effects import (
    EffectEstimate,
    WeightedCdf,
    ate,
    dte,
    late,
    ldte,
    lqte,
    qte,
    rearrange,
    weighted_cdf,
    weighted_quantile,
)
from .estimator import (
    balance_report,
    fit_cbps_just,
    fit_ips,
    fit_lips,
    objective,
    objective_gradient,
)
from .exceptions import (
    ConvergenceError,
    DataValidationError,
    IpsError,
    ParseError,
    SchemaError,
    SeparationError,
    SingularInformationError,
    UnstableVarianceError,
    WeakInstrumentError,
)
from .inference import (
    BootstrapResult,
    PsInfluence,
    bootstrap_se,
    cbps_influence,
    density_at,
    effect_variance,
    mle_influence,
    ps_influence,
)
from .kernels import (
    BalanceKernel,
    build_kernel,
    dump_kernel,
    kernel_exponential,
    kernel_indicator,
    kernel_projection,
    load_kernel,
    projection_support_table,
    sphere_halfspace_measure,
)
from .optim import FitResult, OptimOptions, multistart_minimize
from .propensity import LogisticModel, fit_mle, model_from_fit, predict, score
from .simulation import (
    ATE_TRUTH,
    LATE_TRUTH,
    LQTE_TRUTH,
    MetricsRow,
    STUDY_PRESETS,
    StudyConfig,
    StudyResult,
    dgp_kang_schafer,
    dgp_lte,
    run_study,
    run_study_cached,
    simulate_dataset,
    write_metrics_csv,
    write_metrics_json,
)

__version__ = "0.1.0"
