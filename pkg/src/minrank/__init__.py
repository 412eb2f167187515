"""Minimum-rank factor-analytic covariance decomposition.

Solves the Frisch-Kalman problem (minimize the rank of Sigma - Delta
over nonnegative diagonal Delta with Sigma - Delta PSD) with a convex
rank-search algorithm, certifies when the relaxation is provably
tight, and benchmarks against nuclear-norm, low-rank-inducing norm and
log-det heuristics.
"""

from . import baselines, bench, conic, linalg, matio, tightness
from . import frisch_kalman
from .baselines import HeuristicResult, logdet_solve, nuclear_norm_solve, rstar_solve
from .bench import ExperimentConfig, SuccessTable, gen_low_rank, gen_noise, run_experiment
from .conic import (
    Cone,
    PreparedProblem,
    SdpProblem,
    SdpSolution,
    SolverConfig,
    SolverFailure,
)
from .frisch_kalman import (
    FkConfig,
    FkInstance,
    FkResult,
    VARIANT_FK,
    VARIANT_SHAPIRO,
    build_dual_sdp,
    check_feasibility,
    duality_gap,
    recover_primal,
)
from .tightness import TightnessReport, analyze, nonempty_witness

__version__ = "0.1.0"

__all__ = [
    "baselines",
    "bench",
    "conic",
    "frisch_kalman",
    "linalg",
    "matio",
    "tightness",
    "HeuristicResult",
    "logdet_solve",
    "nuclear_norm_solve",
    "rstar_solve",
    "ExperimentConfig",
    "SuccessTable",
    "gen_low_rank",
    "gen_noise",
    "run_experiment",
    "Cone",
    "PreparedProblem",
    "SdpProblem",
    "SdpSolution",
    "SolverConfig",
    "SolverFailure",
    "FkConfig",
    "FkInstance",
    "FkResult",
    "VARIANT_FK",
    "VARIANT_SHAPIRO",
    "build_dual_sdp",
    "check_feasibility",
    "duality_gap",
    "recover_primal",
    "TightnessReport",
    "analyze",
    "nonempty_witness",
    "__version__",
]
