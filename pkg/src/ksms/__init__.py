"""Finite-volume simulator for chemotaxis with signal-dependent motility.

Cell density u diffuses with rate gamma(v), drifts along signal
gradients with coefficient chi(v), and grows logistically; the signal v
solves the quasi-static screened Poisson equation (I - L)v = u.  The
package exists to run that system and to measure the quantities the
convergence theory is built from: the mass bound, the Lyapunov energy
and its dissipation split, and the growth threshold mu > K0/16.
"""

from .cli_io import SimConfig, build_config, load_config, main, parse_config
from .diagnostics import (
    DecayFit,
    DiagnosticsRecord,
    DiagnosticsSeries,
    DissipationReport,
    StabilityCheck,
    check_stability,
    dissipation_terms,
    fit_decay_rate,
    lyapunov_E,
    lyapunov_monotone,
    sandwich_check,
    stability_from_k0,
)
from .elliptic_solver import EllipticSolveOptions, solve_screened_poisson
from .errors import (
    BlowupGuardError,
    ConfigError,
    FitError,
    KsmsError,
    ModelValidityError,
    SnapshotFormatError,
    SolverError,
    StepCollapseError,
)
from .grid_field import (
    FaceData,
    Grid2D,
    as_field,
    face_gradients,
    face_means,
    integrate,
    laplacian_neumann,
)
from .motility import (
    H1Report,
    MotilitySpec,
    compute_k0,
    constant,
    custom_table,
    double_exp,
    evaluate,
    exp_decay,
    ks_pair,
    power_law,
    validate_h1,
)
from .snapshot_io import read_snapshot, write_snapshot
from .sweep import RegimeEntry, SweepPlan, classify, expand, parse_plan, run_sweep
from .time_stepper import (
    SimState,
    StepControl,
    compute_rhs,
    initial_condition,
    run,
    stable_dt,
    step,
)

__version__ = "0.1.0"
