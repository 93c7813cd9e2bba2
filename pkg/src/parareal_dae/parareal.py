"""Parareal for index-2 DAEs.

Two update rules are available:

``classic``
    X_n^{k+1} = F(X_{n-1}^k) + G(X_{n-1}^{k+1}) - G(X_{n-1}^k) on all components.
``init``
    The same correction restricted to the differential components P P1 x, each
    term projected at its own state, followed by a consistent re-initialisation
    that keeps those components.

Both propagators are implicit Euler; the fine one takes steps of ``fine_h`` per
window, the coarse one ``coarse_steps_per_window`` equal steps.
"""

from __future__ import annotations

import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dae_core import DaeModel, differential_projector, projector_chain
from .errors import ContractViolation, DaeError, PararealError
from .init import project_consistentialize
from .integrator import NewtonConfig, Trajectory, propagate, time_grid

log = logging.getLogger(__name__)

VARIANTS = ("classic", "init")
ERROR_COMPONENTS = ("all", "differential")
SEEDS = ("initial", "coarse")


@dataclass(frozen=True)
class WindowGrid:
    t0: float
    t_end: float
    N: int

    @property
    def dT(self) -> float:
        return (self.t_end - self.t0) / self.N

    @property
    def boundaries(self) -> np.ndarray:
        T = self.t0 + np.arange(self.N + 1) * self.dT
        T[-1] = self.t_end
        return T


def make_grid(t0: float, t_end: float, N: int) -> WindowGrid:
    if not isinstance(N, (int, np.integer)) or N < 1:
        raise ContractViolation(f"window count must be a positive integer, got {N!r}")
    if not t_end > t0:
        raise ContractViolation("t_end must exceed t0")
    return WindowGrid(float(t0), float(t_end), int(N))


@dataclass(frozen=True)
class PararealConfig:
    variant: str = "classic"
    fine_h: float = 1e-5
    coarse_steps_per_window: int = 1
    rel_tol: float = 5e-4
    abs_tol: float = 1e-10
    max_iterations: int = 20
    newton: NewtonConfig = NewtonConfig()
    error_components: str = "differential"
    # "initial": X_n^0 = x0 for every window; "coarse": sequential coarse sweep
    seed: str = "initial"
    workers: Optional[int] = None
    stop_on_convergence: bool = True
    keep_history: bool = False

    def validate(self, grid: WindowGrid):
        if self.variant not in VARIANTS:
            raise ContractViolation(f"variant must be one of {VARIANTS}")
        if self.error_components not in ERROR_COMPONENTS:
            raise ContractViolation(f"error_components must be one of {ERROR_COMPONENTS}")
        if self.seed not in SEEDS:
            raise ContractViolation(f"seed must be one of {SEEDS}")
        if self.coarse_steps_per_window < 1:
            raise ContractViolation("coarse_steps_per_window must be >= 1")
        if self.max_iterations < 0:
            raise ContractViolation("max_iterations must be >= 0")
        if not 0 < self.fine_h <= grid.dT:
            raise ContractViolation("fine_h must lie in (0, dT]")
        if self.variant == "classic" and self.fine_h > grid.dT / 2:
            raise ContractViolation("classic variant needs at least two fine steps per window")
        if self.rel_tol < 0 or self.abs_tol <= 0:
            raise ContractViolation("jump tolerances must be non-negative (abs_tol > 0)")


@dataclass
class PararealResult:
    grid: WindowGrid
    config: PararealConfig
    iterations_used: int
    converged: bool
    # window_values[k][n] = X_n^k, k = 0..iterations_used
    window_values: list
    # fine_endpoints[k][n-1] = F(X_{n-1}^k), k = 0..iterations_used-1
    fine_endpoints: list
    jump_errors: list
    first_unconverged: list
    fine_trajectories: list
    fine_times: list
    model_id: str = ""
    component_names: tuple = ()
    model_index: Optional[int] = None
    history: Optional[list] = None

    @property
    def final_values(self) -> np.ndarray:
        return self.window_values[-1]

    @property
    def max_jump(self) -> list:
        return [float(np.max(e)) for e in self.jump_errors]


def jump_norm(candidate, reference, weights_source, rel_tol, abs_tol, projector=None) -> float:
    """Weighted RMS of ``projector (candidate - reference)`` over active rows.

    Each component is scaled by ``abs_tol + rel_tol |weights_source_i|``; rows
    of the projector that vanish do not count. Values below 1 mean converged.
    """
    candidate = np.asarray(candidate, dtype=float)
    reference = np.asarray(reference, dtype=float)
    weights_source = np.asarray(weights_source, dtype=float)
    if candidate.shape != reference.shape or candidate.shape != weights_source.shape:
        raise ContractViolation("jump_norm arguments must share one shape")
    d = candidate - reference
    if projector is None:
        active = np.ones(d.size, dtype=bool)
    else:
        projector = np.asarray(projector, dtype=float)
        d = projector @ d
        row_size = np.max(np.abs(projector), axis=1)
        active = row_size > 1e-12 * max(1.0, float(np.max(row_size)))
    n_active = int(np.sum(active))
    if n_active == 0:
        return 0.0
    scaled = d[active] / (abs_tol + rel_tol * np.abs(weights_source[active]))
    return math.sqrt(float(np.dot(scaled, scaled)) / n_active)


def resolve_workers(workers: Optional[int], N: int) -> int:
    if workers is None:
        workers = os.cpu_count() or 1
    return max(1, min(int(workers), N))


class _Propagators:
    def __init__(self, model, grid, cfg):
        self.model = model
        self.grid = grid
        self.cfg = cfg
        T = grid.boundaries
        self.T = T
        self.fine_grids = [time_grid(T[n - 1], T[n], cfg.fine_h) for n in range(1, grid.N + 1)]
        cs = cfg.coarse_steps_per_window
        self.coarse_grids = [np.linspace(T[n - 1], T[n], cs + 1) for n in range(1, grid.N + 1)]

    def fine(self, n, x):
        """Fine trajectory of window n (1-based) from x."""
        return propagate(self.model, x, self.fine_grids[n - 1], self.cfg.newton, keep=True)

    def coarse(self, n, x):
        return propagate(self.model, x, self.coarse_grids[n - 1], self.cfg.newton)


def _projector(model, cfg, x, t):
    if cfg.error_components == "all":
        return None
    return differential_projector(model, x, t)


def _model_index(model, x0, t0):
    try:
        return projector_chain(model, x0, x0, t0).index
    except DaeError:
        return None


def run(model: DaeModel, x0, grid: WindowGrid, cfg: PararealConfig = PararealConfig()) -> PararealResult:
    """Run Parareal from the consistent initial value ``x0`` at ``grid.t0``."""
    cfg.validate(grid)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.n_dof,):
        raise ContractViolation(f"x0 must have length {model.n_dof}")
    N = grid.N
    prop = _Propagators(model, grid, cfg)
    T = prop.T
    workers = resolve_workers(cfg.workers, N)

    def consistent(x_hat, t, guess=None):
        return project_consistentialize(model, x_hat, t, cfg.newton, guess=guess)

    def guarded(fn, n, x, k):
        try:
            return fn(n, x)
        except DaeError as exc:
            raise PararealError(
                f"window {n} failed in iteration {k}: {exc}", window=n, iteration=k
            ) from exc

    # iteration 0
    X = np.empty((N + 1, model.n_dof))
    X[0] = x0
    G_old = np.empty_like(X)
    if cfg.seed == "coarse":
        for n in range(1, N + 1):
            G_old[n] = guarded(prop.coarse, n, X[n - 1], 0)
            X[n] = G_old[n] if cfg.variant == "classic" else consistent(G_old[n], T[n], G_old[n])
    else:
        for n in range(1, N + 1):
            X[n] = x0 if cfg.variant == "classic" else consistent(x0, T[n], x0)
        for n in range(1, N + 1):
            G_old[n] = guarded(prop.coarse, n, X[n - 1], 0)

    window_values = [X.copy()]
    fine_endpoints, jump_errors, first_unconverged = [], [], []
    history = [] if cfg.keep_history else None
    trajectories = []
    converged = False
    k = 0

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while k < cfg.max_iterations:
            Xk = X
            if pool is None:
                trajectories = [guarded(prop.fine, n, Xk[n - 1], k + 1) for n in range(1, N + 1)]
            else:
                futures = [pool.submit(guarded, prop.fine, n, Xk[n - 1], k + 1) for n in range(1, N + 1)]
                trajectories = [f.result() for f in futures]
            F = np.array([tr[-1] for tr in trajectories])

            X_new = np.empty_like(Xk)
            X_new[0] = x0
            G_new = np.empty_like(G_old)
            errs = np.zeros(N)
            for n in range(1, N + 1):
                G_new[n] = guarded(prop.coarse, n, X_new[n - 1], k + 1)
                Fn = F[n - 1]
                if cfg.variant == "classic":
                    X_new[n] = Fn + G_new[n] - G_old[n]
                else:
                    x_hat = (
                        differential_projector(model, Fn, T[n]) @ Fn
                        + differential_projector(model, G_new[n], T[n]) @ G_new[n]
                        - differential_projector(model, G_old[n], T[n]) @ G_old[n]
                    )
                    X_new[n] = consistent(x_hat, T[n], guess=Fn)
                errs[n - 1] = jump_norm(
                    X_new[n], Fn, Fn, cfg.rel_tol, cfg.abs_tol, _projector(model, cfg, Fn, T[n])
                )
            k += 1
            X, G_old = X_new, G_new
            window_values.append(X.copy())
            fine_endpoints.append(F)
            jump_errors.append(errs)
            bad = np.flatnonzero(errs >= 1.0)
            first_unconverged.append(int(bad[0]) + 1 if bad.size else None)
            if history is not None:
                history.append(trajectories)
            log.info("iteration %d: max jump %.3e", k, errs.max())
            converged = bool(errs.max() < 1.0)
            if converged and cfg.stop_on_convergence:
                break
    finally:
        if pool is not None:
            pool.shutdown()

    return PararealResult(
        grid=grid,
        config=cfg,
        iterations_used=k,
        converged=converged,
        window_values=window_values,
        fine_endpoints=fine_endpoints,
        jump_errors=jump_errors,
        first_unconverged=first_unconverged,
        fine_trajectories=trajectories,
        fine_times=prop.fine_grids,
        model_id=model.model_id,
        component_names=tuple(model.component_names),
        model_index=_model_index(model, x0, grid.t0),
        history=history,
    )


def _concatenate(times_list, states_list):
    times = [times_list[0]]
    states = [states_list[0]]
    first_steps = []
    offset = len(times_list[0])
    for ts, xs in zip(times_list[1:], states_list[1:]):
        # drop the window's own initial value in favour of the previous fine endpoint
        times.append(ts[1:])
        states.append(xs[1:])
        first_steps.append(offset)
        offset += len(ts) - 1
    return np.concatenate(times), np.concatenate(states), first_steps


def finalize_trajectory(result: PararealResult, model: Optional[DaeModel] = None, iteration=None) -> Trajectory:
    """Global trajectory from the fine solves of the last (or a given) iteration.

    At each interior boundary the stored state is the fine endpoint of the
    window ending there. For index-2 models the first fine step of every later
    window is listed in ``metadata["possibly_inconsistent"]``.
    """
    if iteration is None:
        trajs = result.fine_trajectories
    else:
        if result.history is None:
            raise ContractViolation("run with keep_history=True to finalize earlier iterations")
        trajs = result.history[iteration - 1]
    if not trajs:
        raise ContractViolation("result holds no fine trajectories (zero iterations)")
    times, states, first_steps = _concatenate(result.fine_times, trajs)
    if not result.converged:
        warnings.warn("finalizing a non-converged Parareal result", RuntimeWarning, stacklevel=2)
    index = result.model_index
    meta = {
        "converged": result.converged,
        "iterations_used": result.iterations_used,
        "window_first_steps": first_steps,
        "possibly_inconsistent": first_steps if index == 2 else [],
    }
    return Trajectory(
        times=times,
        states=states,
        step_size=result.config.fine_h,
        model_id=result.model_id if model is None else model.model_id,
        component_names=result.component_names,
        metadata=meta,
    )


def sequential_fine(model: DaeModel, x0, grid: WindowGrid, cfg: PararealConfig = PararealConfig()):
    """Sequential fine solve on the Parareal step layout.

    Returns ``(boundary_values, trajectory)``; boundary_values[n] is the state
    at T_n.
    """
    prop = _Propagators(model, grid, cfg)
    x = np.asarray(x0, dtype=float)
    values = [x]
    times_list, states_list = [], []
    for n in range(1, grid.N + 1):
        tr = prop.fine(n, x)
        times_list.append(prop.fine_grids[n - 1])
        states_list.append(tr)
        x = tr[-1]
        values.append(x)
    times, states, _ = _concatenate(times_list, states_list)
    traj = Trajectory(
        times=times, states=states, step_size=cfg.fine_h, model_id=model.model_id,
        component_names=tuple(model.component_names),
    )
    return np.array(values), traj
