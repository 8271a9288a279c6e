"""Desk-scale laboratory for diffusions interacting through their ranks.

Particle simulation, hydrodynamic-limit PDE solving, explicit and
variational rate-functional evaluation, and Girsanov-tilted Monte Carlo
probes, built to cross-check each other on shared scenarios.
"""

__version__ = "0.1.0"

from .errors import ConfigError, NumericsError, RanklabError
from .coefficients import (
    InitialDistribution,
    RankCoefficients,
    ValidationReport,
    validate_assumptions,
)
from .measures import (
    EmpiricalCdf,
    GridCdf,
    GridCdfPath,
    MeasurePathDistance,
    ball_contains,
    bounded_lipschitz_distance,
    ks_distance,
    levy_distance,
    path_distance,
    quantile_init,
)
from .particle import (
    GirsanovAccumulator,
    ParticleEnsemble,
    SimConfig,
    SimulationResult,
    TiltField,
    em_step,
    girsanov_update,
    pathwise_cost,
    rank_fractions,
    simulate_path,
    tilted_em_step,
)
from .pde import (
    DiagnosticsReport,
    PdeGrid,
    SolverOptions,
    regularity_diagnostics,
    solve_forward,
    solve_tilted,
)
from .rate import (
    BasisElement,
    RateOptions,
    RateReport,
    TestBasis,
    VariationalResult,
    default_basis,
    rate_functional,
    recover_tilt,
    variational_rate,
)
from .ldp import (
    BallEstimate,
    LdpEntry,
    LdpReport,
    LlnEntry,
    LlnReport,
    estimate_ball_probability,
    run_ldp,
    run_lln,
)
from .config import ScenarioConfig, load_config, parse_config
from .harness import ExperimentReport, emit_plotdata, run_experiment
