"""arxrls: recursive least squares for ARX systems plus a Monte Carlo
harness that measures convergence rates and asymptotic efficiency.

The public surface: system/trajectory modelling (``model``), the recursion
and its exact identities (``estimator``), stationary covariance tables and
excitation checks (``stationary``), Monte Carlo statistics (``efficiency``),
experiment configuration (``config``), and the execution/aggregation
harness (``harness``).  ``arxrls._kernels.BACKEND`` names the active kernel
backend ("compiled" or "pure"); both give bit-identical results.
"""

from ._kernels import BACKEND
from .config import (
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    config_to_dict,
    default_config,
    dump_config,
    load_config,
)
from .efficiency import (
    CrlbEstimate,
    McErrorPanel,
    NormalityResult,
    RateFit,
    TailReport,
    covariance_gap,
    crlb,
    crlb_from_gram,
    deviation_matrix,
    deviation_moment_rate,
    empirical_covariance,
    fit_power_law,
    moment_rate,
    normality_directions,
    normality_test,
    tail_probability,
)
from .estimator import (
    ErrorDecomposition,
    IllConditionedWarning,
    RlsConfig,
    RlsState,
    RlsTrace,
    batch_oracle,
    error_decomposition,
    initial_state,
    project,
    rls_step,
    run_rls,
    step_gain,
    woodbury_residual,
    write_trace_csv,
)
from .harness import (
    McSummary,
    RunRecord,
    analyze,
    execute_run,
    read_run_record,
    run_experiment,
    worker_count,
    write_run_record,
)
from .model import (
    ArxSystem,
    DeterministicSignal,
    SignalGeneratorSpec,
    StabilityReport,
    Trajectory,
    UnstableSystemError,
    build_regressor,
    check_stability,
    generate_input,
    regressor_matrix,
    simulate,
)
from .seeding import as_generator, run_generator
from .stationary import (
    CovarianceTable,
    DegenerateExcitationError,
    ExcitationMatrix,
    build_excitation_matrix,
    check_persistent_excitation,
    default_eps_pd,
    estimate_covariances,
)

__version__ = "0.1.0"
