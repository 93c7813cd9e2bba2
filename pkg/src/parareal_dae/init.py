"""Consistent initial values with prescribed differential components."""

from __future__ import annotations

import numpy as np

from .dae_core import (
    DEFAULT_RANK_TOL,
    DaeModel,
    differential_projector,
    fd_jacobian,
    left_null_basis,
)
from .errors import NewtonError, UnsupportedStructureError
from .integrator import NewtonConfig, euler_step


def warmup_consistentialize(
    model: DaeModel, x_guess, t0: float, h_warm: float, cfg: NewtonConfig = NewtonConfig()
) -> np.ndarray:
    """Two implicit Euler steps from ``t0 - 2 h_warm`` to ``t0``.

    For models with a constant mass matrix and linear index-2 components the
    result is consistent at t0 whatever the algebraic part of ``x_guess``.
    """
    if not model.linear_index2:
        raise UnsupportedStructureError(
            f"{model!r} does not declare linear index-2 components with constant mass"
        )
    if h_warm <= 0:
        raise ValueError("h_warm must be positive")
    x = np.asarray(x_guess, dtype=float)
    t_start = t0 - 2 * h_warm
    x = euler_step(model, x, t_start + h_warm, h_warm, cfg)
    return euler_step(model, x, t0, t0 - (t_start + h_warm), cfg)


def project_consistentialize(
    model: DaeModel,
    x_hat,
    t: float,
    cfg: NewtonConfig = NewtonConfig(),
    guess=None,
    max_projector_updates: int = 5,
) -> np.ndarray:
    """Consistent ``x`` at ``t`` with ``P P1 (x - x_hat) = 0``.

    Uses ``model.analytic_consistentialize`` when present. Otherwise solves
    for ``(x, w)`` with ``w`` standing in for ``x'``::

        A w + b(x, t)                    = 0   explicit equations
        W (db/dx(x, t) w + db/dt(x, t))  = 0   hidden constraints, W A = 0
        P P1 (x - x_hat)                 = 0

    by Gauss-Newton with minimum-norm steps; components of ``w`` that the
    system leaves free do not affect ``x``. ``P P1`` is refreshed at the
    solution until it stops moving (it is frozen for constant-Q1 models).
    """
    x_hat = np.asarray(x_hat, dtype=float)
    if model.analytic_consistentialize is not None:
        return np.asarray(model.analytic_consistentialize(x_hat, t), dtype=float)
    if not model.constant_mass:
        raise UnsupportedStructureError(
            "numeric consistentialisation needs a constant mass matrix or an analytic hook"
        )
    x = np.array(x_hat if guess is None else guess, dtype=float)
    pp1 = differential_projector(model, x_hat if guess is None else x, t)
    for _ in range(max(1, max_projector_updates)):
        x = _solve_consistent(model, x_hat, t, pp1, x, cfg)
        if model.constant_q1:
            break
        pp1_new = differential_projector(model, x, t)
        if np.max(np.abs(pp1_new - pp1)) <= 1e-12 * max(1.0, np.max(np.abs(pp1))):
            break
        pp1 = pp1_new
    return x


def _solve_consistent(model, x_hat, t, pp1, x0, cfg):
    n = model.n_dof
    A = np.asarray(model.eval_mass(x0, t), dtype=float)
    W = left_null_basis(A, DEFAULT_RANK_TOL)
    target = pp1 @ x_hat

    def hidden(x, w):
        return W @ (model.eval_rhs_jacobian(x, t) @ w + model.eval_rhs_time_derivative(x, t))

    def residual(z):
        x, w = z[:n], z[n:]
        return np.concatenate([
            A @ w + model.eval_rhs(x, t),
            hidden(x, w),
            pp1 @ x - target,
        ])

    def jacobian(z):
        x, w = z[:n], z[n:]
        Jb = model.eval_rhs_jacobian(x, t)
        top = np.hstack([Jb, A])
        mid = np.hstack([fd_jacobian(lambda xx: hidden(xx, w), x), W @ Jb])
        bot = np.hstack([pp1, np.zeros((n, n))])
        return np.vstack([top, mid, bot])

    # start w from the least-squares derivative implied by x0
    w0 = np.linalg.lstsq(A, -np.asarray(model.eval_rhs(x0, t)), rcond=None)[0]
    z = np.concatenate([x0, w0])
    r = residual(z)
    rn = np.linalg.norm(r)
    for _ in range(cfg.max_iterations):
        if rn <= cfg.abs_tol:
            return z[:n]
        dz = np.linalg.lstsq(jacobian(z), -r, rcond=None)[0]
        lam = 1.0
        z_new = z + dz
        r_new = residual(z_new)
        halvings = 0
        while not np.linalg.norm(r_new) <= rn and halvings < cfg.damping:
            lam *= 0.5
            halvings += 1
            z_new = z + lam * dz
            r_new = residual(z_new)
        z, r = z_new, r_new
        rn = np.linalg.norm(r)
        if rn <= cfg.abs_tol:
            return z[:n]
        dx = lam * dz[:n]
        if lam == 1.0 and np.linalg.norm(dx) <= cfg.rel_tol * (1.0 + np.linalg.norm(z[:n])):
            return z[:n]
    raise NewtonError(
        f"consistent initialisation did not converge at t={t} (|r|={rn:.3e})",
        best=z[:n], residual_norm=rn,
    )
