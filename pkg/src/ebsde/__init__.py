"""Pointwise deep-BSDE solver for semilinear elliptic boundary-value problems.

Simulates the forward diffusion to its first domain exit (truncated at T),
rolls the backward equation along the frozen paths with one gradient
network per interior time step, and trains everything against the terminal
mismatch.  See README for the batch front end and HTTP service.
"""

__version__ = "0.1.0"

from .problems import (DividendParams, ProblemSpec, build_problem, dividend_problem,
                       intensity_matrix, poisson_problem, quadratic_problem)
from .sde import (ExitSample, PathBatch, SimulationError, TimeGrid, build_time_grid,
                  dump_paths_csv, simulate_exit_times, simulate_paths)
from .neural import (Network, NetworkLayout, OptimizerState, eval_network, init_network,
                     load_network, optimizer_step, save_network)
from .solver import (RunResult, SolveError, SolveResult, SolverState, TrainConfig,
                     TrainingError, accumulate_gradients, estimate_point,
                     init_solver_state, loss, rollout, train_single_run)
from .config import (ConfigError, RunConfig, emit_config, parse_config,
                     parse_config_file, resolve_config, resolve_points)
from .jobs import BatchResult, PointResult, RunTrace, run_jobs

__all__ = [
    "__version__",
    "DividendParams", "ProblemSpec", "build_problem", "dividend_problem",
    "intensity_matrix", "poisson_problem", "quadratic_problem",
    "ExitSample", "PathBatch", "SimulationError", "TimeGrid", "build_time_grid",
    "dump_paths_csv", "simulate_exit_times", "simulate_paths",
    "Network", "NetworkLayout", "OptimizerState", "eval_network", "init_network",
    "load_network", "optimizer_step", "save_network",
    "RunResult", "SolveError", "SolveResult", "SolverState", "TrainConfig",
    "TrainingError", "accumulate_gradients", "estimate_point", "init_solver_state",
    "loss", "rollout", "train_single_run",
    "ConfigError", "RunConfig", "emit_config", "parse_config", "parse_config_file",
    "resolve_config", "resolve_points",
    "BatchResult", "PointResult", "RunTrace", "run_jobs",
]
