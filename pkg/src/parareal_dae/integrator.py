"""Implicit Euler for quasilinear DAEs with a damped Newton inner solve."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dae_core import DaeModel
from .errors import ContractViolation, LinearSolveError, NewtonError, StepError


@dataclass(frozen=True)
class NewtonConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-12
    max_iterations: int = 50
    damping: int = 8

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ContractViolation("Newton tolerances must be positive")
        if self.max_iterations < 1:
            raise ContractViolation("max_iterations must be >= 1")
        if self.damping < 0:
            raise ContractViolation("damping must be >= 0")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    step_size: float
    model_id: str = ""
    component_names: tuple = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if self.times.ndim != 1 or self.states.shape[0] != self.times.size:
            raise ContractViolation("times and states must have matching length")
        if np.any(np.diff(self.times) <= 0):
            raise ContractViolation("times must be strictly increasing")

    def __len__(self):
        return self.times.size

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def component(self, name) -> np.ndarray:
        return self.states[:, list(self.component_names).index(name)]


def _norm(v):
    return math.sqrt(float(np.dot(v, v)))


def newton_solve(
    residual: Callable, jacobian: Callable, guess, cfg: NewtonConfig = NewtonConfig()
) -> np.ndarray:
    """Damped Newton iteration.

    Converged when ``||r(x)|| <= abs_tol`` or when the last step satisfies
    ``||dx|| <= rel_tol (1 + ||x||)``. A full step that increases the residual
    norm is halved up to ``cfg.damping`` times.
    """
    x = np.array(guess, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ContractViolation("Newton guess must be finite")
    r = np.asarray(residual(x), dtype=float)
    rn = _norm(r)
    best, best_rn = x, rn
    for _ in range(cfg.max_iterations):
        if rn <= cfg.abs_tol:
            return x
        J = jacobian(x)
        try:
            dx = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise LinearSolveError(f"singular Newton Jacobian: {exc}") from exc
        lam = 1.0
        x_new = x + dx
        r_new = np.asarray(residual(x_new), dtype=float)
        rn_new = _norm(r_new)
        halvings = 0
        while not (rn_new <= rn) and halvings < cfg.damping:
            lam *= 0.5
            halvings += 1
            x_new = x + lam * dx
            r_new = np.asarray(residual(x_new), dtype=float)
            rn_new = _norm(r_new)
        x, r, rn = x_new, r_new, rn_new
        if rn < best_rn:
            best, best_rn = x, rn
        small_step = lam == 1.0 and _norm(dx) <= cfg.rel_tol * (1.0 + _norm(x))
        if rn <= cfg.abs_tol:
            if small_step or rn == 0.0:
                return x
            # a small residual can still hide a sizeable state error in badly
            # scaled rows; one chord step with the last Jacobian removes it
            x_pol = x - np.linalg.solve(J, r)
            r_pol = np.asarray(residual(x_pol), dtype=float)
            return x_pol if _norm(r_pol) <= rn else x
        if small_step:
            return x
    raise NewtonError(
        f"Newton did not converge in {cfg.max_iterations} iterations (|r|={best_rn:.3e})",
        best=best,
        residual_norm=best_rn,
    )


def euler_step(model: DaeModel, x_prev, t_next: float, h: float, cfg: NewtonConfig = NewtonConfig()) -> np.ndarray:
    """One implicit Euler step; ``x_prev`` may be inconsistent."""
    if h <= 0:
        raise ContractViolation("step size must be positive")
    x_prev = np.asarray(x_prev, dtype=float)
    if not np.all(np.isfinite(x_prev)):
        raise ContractViolation("x_prev must be finite")
    inv_h = 1.0 / h

    if model.constant_mass:
        A = np.asarray(model.eval_mass(x_prev, t_next), dtype=float)
        A_h = A * inv_h

        def residual(x):
            return A_h @ (x - x_prev) + model.eval_rhs(x, t_next)

        def jacobian(x):
            return A_h + model.eval_rhs_jacobian(x, t_next)
    else:
        def residual(x):
            return model.eval_mass(x, t_next) @ ((x - x_prev) * inv_h) + model.eval_rhs(x, t_next)

        def jacobian(x):
            ydot = (x - x_prev) * inv_h
            return (
                model.eval_mass(x, t_next) * inv_h
                + model.eval_mass_directional_jacobian(ydot, x, t_next)
                + model.eval_rhs_jacobian(x, t_next)
            )

    try:
        return newton_solve(residual, jacobian, x_prev, cfg)
    except (NewtonError, LinearSolveError) as exc:
        rn = getattr(exc, "residual_norm", None)
        raise StepError(
            f"implicit Euler step to t={t_next:.6g} (h={h:.3g}) failed: {exc}",
            t_next=t_next, h=h, residual_norm=rn,
        ) from exc


def time_grid(t0: float, t_end: float, h: float) -> np.ndarray:
    """Uniform grid ``t0 + i h`` whose final step is shortened to hit t_end.

    A remainder below 1e-9 h is absorbed into the previous step instead of
    producing a sliver step.
    """
    if h <= 0:
        raise ContractViolation("step size must be positive")
    span = t_end - t0
    if span < 0:
        raise ContractViolation("t_end must not precede t0")
    if span == 0:
        return np.array([t0])
    m = math.ceil(span / h - 1e-9)
    m = max(m, 1)
    times = t0 + h * np.arange(m + 1, dtype=float)
    times[-1] = t_end
    return times


def propagate(model, x0, times, cfg: NewtonConfig = NewtonConfig(), keep: bool = False):
    """Integrate over a prescribed grid; returns the final state or all states."""
    x = np.asarray(x0, dtype=float)
    states = [x] if keep else None
    for i in range(1, len(times)):
        try:
            x = euler_step(model, x, times[i], times[i] - times[i - 1], cfg)
        except StepError as exc:
            exc.step_index = i
            raise
        if keep:
            states.append(x)
    if keep:
        return np.array(states)
    return x


def integrate(
    model: DaeModel, x0, t0: float, t_end: float, h: float, cfg: NewtonConfig = NewtonConfig()
) -> Trajectory:
    """Implicit Euler from t0 to t_end inclusive with fixed step h."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.n_dof,):
        raise ContractViolation(f"x0 must have length {model.n_dof}")
    times = time_grid(t0, t_end, h)
    states = propagate(model, x0, times, cfg, keep=True)
    return Trajectory(
        times=times,
        states=states,
        step_size=h,
        model_id=model.model_id,
        component_names=tuple(model.component_names),
    )
