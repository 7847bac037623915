"""Backward-equation rollout, loss, adjoint gradients, and training.

The trainables are a scalar u0 (the estimate of u(x)), a row vector z0
(gradient at t_0), and one tanh subnetwork per interior grid time t_1 ...
t_{N-1} representing the gradient process there.  Along each simulated
path,

    Y_0 = u0,
    Y_{n+1} = Y_n + 1_{n < exit} ( zeta_n sigma(X_n) dW_n - f(X_n, Y_n, zeta_n) dt_n ),

with zeta_0 = z0 and zeta_n the subnet output at X_{t_n}; training
minimizes the mean squared terminal mismatch against xi.

Implementation notes, all load-bearing for single-core throughput:
- subnet evaluations do not depend on Y, so all N-1 subnet forwards (and
  backwards) run as stacked batched matmuls over the step axis;
- sigma(X_n) dW_n and the alive indicators are precomputed per batch, so
  the per-step Y recursion is elementwise;
- the backward pass is a hand-rolled adjoint of exactly this recursion
  using the problems' analytic generator partials (lam_n = dLoss/dY_n),
  not a generic autodiff graph;
- validation batches are simulated and prepared once per run and reused
  every epoch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng
from .neural import (NetworkLayout, Network, OptimizerState, NonFiniteGradientError,
                     default_layout, glorot_limits, optimizer_step)
from .problems import ProblemSpec
from .sde import TimeGrid, PathBatch, build_time_grid, simulate_paths

__all__ = [
    "TrainConfig",
    "SolverState",
    "RolloutTape",
    "RunResult",
    "SolveResult",
    "SolveError",
    "TrainingError",
    "init_solver_state",
    "rollout",
    "loss",
    "accumulate_gradients",
    "learning_rate_at",
    "train_single_run",
    "estimate_point",
    "aggregate_estimate",
]


class TrainingError(RuntimeError):
    """Training diverged; carries the epoch where it happened."""

    def __init__(self, epoch: int, message: str):
        self.epoch = int(epoch)
        super().__init__(f"epoch {epoch}: {message}")


class SolveError(RuntimeError):
    """Every run of a point estimate failed."""


# a loss this large can only be an exponential blow-up of the rollout, not a
# poorly trained but recoverable state; runs crossing it are marked failed
# (and excluded from the point average) instead of poisoning the estimate
LOSS_OVERFLOW = 1e12


@dataclass(frozen=True)
class TrainConfig:
    """Grid, batch, schedule, and restart settings for one point estimate."""

    T: float
    N: int
    gamma: float = 2.0
    epochs: int = 200
    batch_size: int = 64
    validation_size: int = 256
    runs: int = 5
    tail: int = 3
    lr: float = 5e-3
    lr_final: Optional[float] = None
    decay_start: float = 0.5
    hidden_widths: Optional[tuple] = None
    shared_subnet: bool = False
    fixed_paths: bool = False
    seed: int = 1

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.epochs > 0 and not (1 <= self.tail <= self.epochs):
            raise ValueError(f"tail must satisfy 1 <= tail <= epochs, got {self.tail}")
        if self.batch_size < 1 or self.validation_size < 1:
            raise ValueError("batch and validation sizes must be >= 1")
        if self.runs < 1:
            raise ValueError(f"runs must be >= 1, got {self.runs}")
        if self.lr <= 0.0 or (self.lr_final is not None and self.lr_final <= 0.0):
            raise ValueError("learning rates must be positive")
        if not (0.0 <= self.decay_start <= 1.0):
            raise ValueError(f"decay_start must lie in [0, 1], got {self.decay_start}")

    def build_grid(self) -> TimeGrid:
        return build_time_grid(self.T, self.N, self.gamma)

    def layout_for(self, d: int) -> NetworkLayout:
        if self.hidden_widths is None:
            return default_layout(d)
        return NetworkLayout(input_dim=d, hidden_widths=tuple(self.hidden_widths), output_dim=d)


def learning_rate_at(cfg: TrainConfig, epoch: int) -> float:
    """Constant lr, or geometric decay from lr to lr_final starting at
    floor(decay_start * epochs) and reaching lr_final at the last epoch."""
    if cfg.lr_final is None or cfg.epochs <= 1:
        return cfg.lr
    e0 = int(np.floor(cfg.decay_start * cfg.epochs))
    if epoch < e0:
        return cfg.lr
    span = max(1, cfg.epochs - 1 - e0)
    frac = min(1.0, (epoch - e0) / span)
    return cfg.lr * (cfg.lr_final / cfg.lr) ** frac


class SolverState:
    """All trainables as views into one flat vector, plus optimizer moments.

    Subnet parameters are stored as per-layer stacks W[k] of shape
    (n_stacks, fan_out, fan_in) so that forward/backward passes batch over
    the time-step axis; with shared_subnet the stack depth is 1 and
    broadcasts across steps.
    """

    def __init__(self, layout: NetworkLayout, n_subnets: int, shared: bool,
                 lr: float = 5e-3):
        self.layout = layout
        self.n_subnets = int(n_subnets)
        self.shared = bool(shared)
        self.n_stacks = 1 if (shared and n_subnets > 0) else self.n_subnets
        d = layout.input_dim
        sizes = layout.sizes
        n_params = 1 + d
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            n_params += self.n_stacks * (fan_out * fan_in + fan_out)
        self.flat = np.zeros(n_params)
        self.u0 = self.flat[0:1]
        self.z0 = self.flat[1:1 + d]
        self.Ws, self.bs = [], []
        off = 1 + d
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            nw = self.n_stacks * fan_out * fan_in
            self.Ws.append(self.flat[off:off + nw].reshape(self.n_stacks, fan_out, fan_in))
            off += nw
            nb = self.n_stacks * fan_out
            self.bs.append(self.flat[off:off + nb].reshape(self.n_stacks, fan_out))
            off += nb
        self.adam = OptimizerState.for_params(self.flat, lr=lr)

    def grad_buffer(self):
        """A zeroed gradient vector with the same views as the parameters."""
        g = np.zeros_like(self.flat)
        views = {"u0": g[0:1], "z0": g[1:1 + self.layout.input_dim], "Ws": [], "bs": []}
        off = 1 + self.layout.input_dim
        for W, b in zip(self.Ws, self.bs):
            views["Ws"].append(g[off:off + W.size].reshape(W.shape))
            off += W.size
            views["bs"].append(g[off:off + b.size].reshape(b.shape))
            off += b.size
        return g, views

    def subnet(self, k: int) -> Network:
        """View of subnet k (the network evaluated at t_{k+1}) as a Network."""
        if not (0 <= k < self.n_subnets):
            raise IndexError(f"subnet index {k} out of range [0, {self.n_subnets})")
        j = 0 if self.shared else k
        return Network(layout=self.layout,
                       weights=[W[j] for W in self.Ws],
                       biases=[b[j] for b in self.bs])

    @property
    def subnets(self):
        return [self.subnet(k) for k in range(self.n_subnets)]

    def check_finite(self):
        return bool(np.all(np.isfinite(self.flat)))


def init_solver_state(problem: ProblemSpec, grid: TimeGrid, cfg: TrainConfig,
                      seed: int) -> SolverState:
    """u0 uniform on the problem's plausible range, z0 = 0, hidden subnet
    weights Glorot uniform with zero biases; one draw order, fixed by seed.

    Output layers start at zero so every subnet maps to the zero vector:
    the initial gradient process adds no variance to the rollout, and the
    epoch-1 loss sits at the unhedged floor instead of far above it.  The
    output layer then trains as a regression on the random tanh features.
    """
    layout = cfg.layout_for(problem.dim)
    state = SolverState(layout, n_subnets=max(grid.n_steps - 1, 0),
                        shared=cfg.shared_subnet, lr=cfg.lr)
    gen = rng.stream(int(seed))
    lo, hi = problem.u0_range
    state.u0[0] = lo + (hi - lo) * rng.uniforms(gen, ())
    limits = glorot_limits(layout)
    for j in range(state.n_stacks):
        for k, s in enumerate(limits[:-1]):
            u = rng.uniforms(gen, state.Ws[k][j].shape)
            state.Ws[k][j] = (2.0 * u - 1.0) * s
    return state


class _PreparedBatch:
    """Time-major views and precomputed per-step quantities for one batch."""

    __slots__ = ("states_t", "X_sub", "sdw", "alive", "xi", "n_paths")

    def __init__(self, problem: ProblemSpec, batch: PathBatch, grid: TimeGrid):
        N = grid.n_steps
        M, _, d = batch.states.shape
        states_t = np.ascontiguousarray(batch.states.transpose(1, 0, 2)[:N])
        incr_t = np.ascontiguousarray(batch.increments.transpose(1, 0, 2))
        sdw = problem.apply_diffusion(states_t.reshape(-1, d), incr_t.reshape(-1, d))
        self.sdw = np.ascontiguousarray(sdw.reshape(N, M, d))
        self.states_t = states_t
        self.X_sub = states_t[1:]
        self.alive = (np.arange(N)[:, None] < batch.exit_index[None, :]).astype(np.float64)
        self.xi = batch.terminal_xi
        self.n_paths = M


@dataclass
class RolloutTape:
    """Everything the adjoint pass needs to differentiate the loss."""

    terminal_Y: np.ndarray
    xi: np.ndarray
    state: SolverState
    grid: TimeGrid
    problem: ProblemSpec
    prep: _PreparedBatch
    Zs: Optional[np.ndarray]
    hidden: Optional[list]
    FY: Optional[np.ndarray]
    FZ: Optional[np.ndarray]


def _stack_forward(state: SolverState, X: np.ndarray, want_cache: bool):
    """Evaluate all subnets on their step's states: X is (S, M, d)."""
    h = X
    hidden = []
    L = len(state.Ws)
    for k in range(L):
        z = np.matmul(h, state.Ws[k].transpose(0, 2, 1)) + state.bs[k][:, None, :]
        if k < L - 1:
            h = np.tanh(z)
            if want_cache:
                hidden.append(h)
        else:
            h = z
    return h, (hidden if want_cache else None)


def _rollout_prepared(problem: ProblemSpec, prep: _PreparedBatch, state: SolverState,
                      grid: TimeGrid, want_grads: bool) -> RolloutTape:
    N = grid.n_steps
    M = prep.n_paths
    d = problem.dim
    S = N - 1
    if S > 0:
        Zs, hidden = _stack_forward(state, prep.X_sub, want_cache=want_grads)
        wz = np.einsum("smd,smd->sm", Zs, prep.sdw[1:])
    else:
        Zs, hidden, wz = None, None, None
    w0 = prep.sdw[0] @ state.z0
    zeta0 = np.broadcast_to(state.z0, (M, d))

    Y = np.full(M, state.u0[0])
    FY = np.empty((N, M)) if want_grads else None
    FZ = np.empty((N, M, d)) if want_grads else None
    dt = grid.dt
    for n in range(N):
        zeta = zeta0 if n == 0 else Zs[n - 1]
        x_n = prep.states_t[n]
        f = problem.generator(x_n, Y, zeta)
        if want_grads:
            FY[n], FZ[n] = problem.generator_partials(x_n, Y, zeta)
        w = w0 if n == 0 else wz[n - 1]
        Y = Y + prep.alive[n] * (w - f * dt[n])
    return RolloutTape(terminal_Y=Y, xi=prep.xi, state=state, grid=grid,
                       problem=problem, prep=prep, Zs=Zs, hidden=hidden,
                       FY=FY, FZ=FZ)


def rollout(batch: PathBatch, state: SolverState, problem: ProblemSpec,
            grid: TimeGrid, want_grads: bool = True) -> RolloutTape:
    """Roll the backward equation along a batch; tape.terminal_Y is Y_{tau and T}."""
    if batch.states.shape[1] != grid.n_steps + 1:
        raise ValueError("batch was generated on a different grid")
    expected = max(grid.n_steps - 1, 0)
    if state.n_subnets != expected:
        raise ValueError(f"state has {state.n_subnets} subnets, grid needs {expected}")
    prep = _PreparedBatch(problem, batch, grid)
    return _rollout_prepared(problem, prep, state, grid, want_grads)


def loss(terminal_Y: np.ndarray, xi: np.ndarray) -> float:
    """Mean squared terminal mismatch."""
    terminal_Y = np.asarray(terminal_Y)
    xi = np.asarray(xi)
    if terminal_Y.shape != xi.shape:
        raise ValueError(f"shape mismatch: {terminal_Y.shape} vs {xi.shape}")
    if terminal_Y.size == 0:
        raise ValueError("loss of an empty batch is undefined")
    r = terminal_Y - xi
    return float(np.mean(r * r))


def accumulate_gradients(tape: RolloutTape) -> np.ndarray:
    """Adjoint pass: gradient of loss(tape.terminal_Y, tape.xi) for every
    trainable, flat, in the parameter vector's layout."""
    if tape.FY is None:
        raise ValueError("tape was recorded with want_grads=False")
    state = tape.state
    prep = tape.prep
    grid = tape.grid
    N = grid.n_steps
    M = prep.n_paths
    S = N - 1
    dt = grid.dt

    g, views = state.grad_buffer()
    lam = 2.0 * (tape.terminal_Y - tape.xi) / M
    dZs = np.empty((S, M, state.layout.output_dim)) if S > 0 else None
    for n in range(N - 1, -1, -1):
        coeff = lam * prep.alive[n]
        dzeta = coeff[:, None] * (prep.sdw[n] - tape.FZ[n] * dt[n])
        if n == 0:
            views["z0"][:] = dzeta.sum(axis=0)
        else:
            dZs[n - 1] = dzeta
        lam = lam * (1.0 - prep.alive[n] * tape.FY[n] * dt[n])
    views["u0"][0] = lam.sum()

    if S > 0:
        delta = dZs
        L = len(state.Ws)
        for k in range(L - 1, -1, -1):
            below = tape.hidden[k - 1] if k > 0 else prep.X_sub
            gW = np.matmul(delta.transpose(0, 2, 1), below)
            gb = delta.sum(axis=1)
            if state.shared:
                gW = gW.sum(axis=0, keepdims=True)
                gb = gb.sum(axis=0, keepdims=True)
            views["Ws"][k][:] = gW
            views["bs"][k][:] = gb
            if k > 0:
                delta = np.matmul(delta, state.Ws[k]) * (1.0 - tape.hidden[k - 1] ** 2)
    return g


@dataclass
class RunResult:
    """One training run at one point."""

    status: str
    u0_history: np.ndarray
    train_loss: np.ndarray
    val_loss: np.ndarray
    u0_final: float
    seed: int
    seconds: float = 0.0
    failure: Optional[str] = None
    state: Optional[SolverState] = None

    def tail_estimate(self, tail: int) -> float:
        if self.u0_history.size == 0:
            return self.u0_final
        return float(np.mean(self.u0_history[-tail:]))


def train_single_run(problem: ProblemSpec, x0, cfg: TrainConfig, run_seed: int,
                     keep_state: bool = False) -> RunResult:
    """Algorithm main loop for one restart.

    Per epoch: one fresh batch (unless fixed_paths), rollout, adjoint
    gradients, one Adam step on all trainables, then validation loss and a
    u0 snapshot on a fixed independent batch.  Divergence marks the run
    failed; it is never silently retried.
    """
    t_start = time.perf_counter()
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    grid = cfg.build_grid()
    if not bool(problem.inside_domain(x0[None, :])[0]):
        g0 = float(problem.terminal_value(x0[None, :])[0])
        return RunResult(status="boundary", u0_history=np.empty(0),
                         train_loss=np.empty(0), val_loss=np.empty(0),
                         u0_final=g0, seed=int(run_seed),
                         seconds=time.perf_counter() - t_start)

    state = init_solver_state(problem, grid, cfg, rng.derive_seed(run_seed, rng.INIT))
    E = cfg.epochs
    u0_hist = np.empty(E)
    train_hist = np.empty(E)
    val_hist = np.empty(E)

    def failed(epoch, message):
        return RunResult(status="failed", u0_history=u0_hist[:epoch],
                         train_loss=train_hist[:epoch], val_loss=val_hist[:epoch],
                         u0_final=float(state.u0[0]), seed=int(run_seed),
                         seconds=time.perf_counter() - t_start,
                         failure=f"epoch {epoch}: {message}",
                         state=state if keep_state else None)

    if E == 0:
        return RunResult(status="ok", u0_history=u0_hist, train_loss=train_hist,
                         val_loss=val_hist, u0_final=float(state.u0[0]),
                         seed=int(run_seed), seconds=time.perf_counter() - t_start,
                         state=state if keep_state else None)

    val_batch = simulate_paths(problem, x0, grid, cfg.validation_size,
                               rng.derive_seed(run_seed, rng.VALIDATION))
    val_prep = _PreparedBatch(problem, val_batch, grid)
    fixed_prep = None
    if cfg.fixed_paths:
        fixed_batch = simulate_paths(problem, x0, grid, cfg.batch_size,
                                     rng.derive_seed(run_seed, rng.TRAIN_BASE))
        fixed_prep = _PreparedBatch(problem, fixed_batch, grid)

    for e in range(E):
        state.adam.lr = learning_rate_at(cfg, e)
        if fixed_prep is not None:
            prep = fixed_prep
        else:
            batch = simulate_paths(problem, x0, grid, cfg.batch_size,
                                   rng.derive_seed(run_seed, rng.TRAIN_BASE + e))
            prep = _PreparedBatch(problem, batch, grid)
        tape = _rollout_prepared(problem, prep, state, grid, want_grads=True)
        train_hist[e] = loss(tape.terminal_Y, tape.xi)
        if not np.isfinite(train_hist[e]) or train_hist[e] > LOSS_OVERFLOW:
            return failed(e, f"training loss {train_hist[e]} diverged")
        grad = accumulate_gradients(tape)
        try:
            optimizer_step(state.flat, grad, state.adam)
        except NonFiniteGradientError as exc:
            return failed(e, str(exc))
        val_tape = _rollout_prepared(problem, val_prep, state, grid, want_grads=False)
        val_hist[e] = loss(val_tape.terminal_Y, val_tape.xi)
        if not np.isfinite(val_hist[e]) or val_hist[e] > LOSS_OVERFLOW:
            return failed(e, f"validation loss {val_hist[e]} diverged")
        u0_hist[e] = state.u0[0]

    return RunResult(status="ok", u0_history=u0_hist, train_loss=train_hist,
                     val_loss=val_hist, u0_final=float(state.u0[0]),
                     seed=int(run_seed), seconds=time.perf_counter() - t_start,
                     state=state if keep_state else None)


@dataclass
class SolveResult:
    """Aggregated estimate of u(x0) over independent runs."""

    x0: np.ndarray
    estimate: float
    reference: Optional[float]
    runs: list
    n_failed: int
    seconds: float
    seed: int
    config: TrainConfig
    status: str = "ok"

    @property
    def abs_error(self) -> Optional[float]:
        if self.reference is None or not np.isfinite(self.estimate):
            return None
        return abs(self.estimate - self.reference)


def aggregate_estimate(runs, tail: int) -> float:
    """Mean over successful runs of the mean of the last `tail` u0 snapshots."""
    vals = [r.tail_estimate(tail) for r in runs if r.status == "ok"]
    if not vals:
        raise SolveError("all runs failed")
    return float(np.mean(vals))


def estimate_point(problem: ProblemSpec, x0, cfg: TrainConfig,
                   keep_state: bool = False) -> SolveResult:
    """Run cfg.runs independent restarts and average their tail estimates.

    Seeds derive from cfg.seed and the run index, so the result does not
    depend on scheduling.  Raises SolveError when every run failed.
    """
    t_start = time.perf_counter()
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    ref = float(problem.reference(x0[None, :])[0]) if problem.reference is not None else None
    if not bool(problem.inside_domain(x0[None, :])[0]):
        g0 = float(problem.terminal_value(x0[None, :])[0])
        return SolveResult(x0=x0, estimate=g0, reference=ref, runs=[], n_failed=0,
                           seconds=time.perf_counter() - t_start, seed=cfg.seed,
                           config=cfg, status="boundary")
    runs = [train_single_run(problem, x0, cfg, rng.derive_seed(cfg.seed, r),
                             keep_state=keep_state)
            for r in range(cfg.runs)]
    estimate = aggregate_estimate(runs, cfg.tail)
    n_failed = sum(1 for r in runs if r.status == "failed")
    return SolveResult(x0=x0, estimate=estimate, reference=ref, runs=runs,
                       n_failed=n_failed, seconds=time.perf_counter() - t_start,
                       seed=cfg.seed, config=cfg, status="ok")
