"""Simulation and stability certificates for time-delay systems with delayed impulses."""

from .certificate import (
    CertificateParams,
    CertificateReport,
    SigmaResult,
    adt_parameters,
    certify,
    classify_case,
    sigma_closed_form,
    sigma_feasible_max,
    window_count_bounds,
)
from .core import (
    CoverageError,
    DomainError,
    HistoryFunction,
    SystemDefinition,
    Trajectory,
    history_eval,
    history_left_limit,
    trajectory_window,
)
from .integrator import DivergenceError, ScheduleError, SimConfig, convergence_probe, distributed_integral, simulate
from .lyapunov import LyapunovPair, check_envelope, check_final_bound, dini_rate_check, evaluate_W
from .presets import certify_preset, get_preset, sat, spectral_norm, sym_lambda_max
from .schedule import (
    AdtParams,
    ExplicitSchedule,
    PeriodicSchedule,
    check_adt,
    check_reverse_adt,
    count_impulses,
    minimal_mu,
    window_counts,
)

__version__ = "0.1.0"
