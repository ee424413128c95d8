"""Numerical realization of the small-mass limit for damped stochastic wave equations.

The package integrates the second-order system

    mu u_tt = Lap u - gamma(u) u_t + f(u) + sigma(u) dW/dt

on an interval with Dirichlet conditions, together with its mu -> 0 limit,
a quasilinear parabolic equation carrying an explicit noise-induced drift,
and provides the coupled Monte Carlo machinery (common random numbers across
a mass ladder) to verify the convergence and the drift formulas, in both the
infinite-dimensional and the classical finite-dimensional settings.
"""

from .basis import DomainSpec, SpectralBasis, SpectralField, build_basis
from .models import (
    AntiderivativeMap,
    DiffusionModel,
    FrictionModel,
    ModelSet,
    ReactionModel,
    build_diffusion,
    build_model_set,
    combined_drift,
    friction_preset,
    load_friction_csv,
    noise_induced_drift,
    reaction_preset,
    stratonovich_correction,
)
from .noise import (
    NoisePath,
    PathBatch,
    apply_noise,
    load_path,
    refine,
    refine_to,
    sample_batch,
    sample_path,
    save_path,
    stack_paths,
    zero_path,
)
from .wave import (
    EtaState,
    SimulationDiverged,
    WaveSolver,
    WaveState,
    WaveTrajectory,
    eta_to_wave,
    simulate_wave,
    step_wave,
    wave_to_eta,
)
from .limit import (
    LimitSolver,
    LimitStateRho,
    LimitStateU,
    LimitTrajectory,
    simulate_limit,
    step_limit_rho,
    step_limit_u,
    transform_rho_to_u,
    transform_u_to_rho,
)
from .resolvent import (
    OperatorA,
    ResolventError,
    audit_operator,
    implicit_step_via_resolvent,
    resolvent_apply,
    yosida_apply,
)
from .finite_dim import (
    FDNoise,
    FDSystem,
    compare_endpoints,
    drift_S,
    fd_isotropic_2d,
    fd_scalar_system,
    simulate_fd,
    simulate_fd_limit,
    solve_lyapunov,
)
from .diagnostics import (
    ConvergenceReport,
    MetricReport,
    ScalingAudit,
    convergence_report,
    energy_records,
    lambda_functional,
    metric_distance,
    scaling_audit,
)
from .config import DEFAULTS, ConfigError, load_config, validate_config

__version__ = "0.1.0"
