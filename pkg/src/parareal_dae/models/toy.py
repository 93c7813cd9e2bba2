"""Index-2 toy DAE without dynamics.

    x0' + g(x2)               = 0
    x1' - x2                  = 0
    x1 - 0.015 sin(20 pi t)   = 0

The exact solution is x0 = 0, x1 = 0.015 sin(20 pi t), x2 = 0.3 pi cos(20 pi t);
since |x2| < 1 the nonlinearity g never activates along it.
"""

from __future__ import annotations

import math

import numpy as np

from ..dae_core import DaeModel, ProjectorChain

AMPLITUDE = 0.015
OMEGA = 20 * math.pi
_C3 = math.exp(0.75) / 8.0
# exp(-z) is zero in double precision beyond this
_EXP_CUTOFF = 745.0


def _bump(u):
    """exp(-u^-2) and its derivative for u > 0."""
    if u <= 0:
        return 0.0, 0.0
    z = (1.0 / u) ** 2
    if z > _EXP_CUTOFF:
        return 0.0, 0.0
    e = math.exp(-z)
    return e, 2.0 * z / u * e


def g(x: float) -> float:
    if x <= 1.0:
        return 0.0
    v1, _ = _bump(x - 1.0)
    if x <= 2.0:
        return v1
    v2, _ = _bump(x - 2.0)
    return v1 - _C3 * v2


def dg(x: float) -> float:
    if x <= 1.0:
        return 0.0
    _, d1 = _bump(x - 1.0)
    if x <= 2.0:
        return d1
    _, d2 = _bump(x - 2.0)
    return d1 - _C3 * d2


def exact_solution(t):
    t = np.asarray(t, dtype=float)
    return np.stack(
        [np.zeros_like(t), AMPLITUDE * np.sin(OMEGA * t), AMPLITUDE * OMEGA * np.cos(OMEGA * t)],
        axis=-1,
    )


_MASS = np.diag([1.0, 1.0, 0.0])
_MASS.setflags(write=False)


class ToyIndex2Model(DaeModel):
    n_dof = 3
    component_names = ("x0", "x1", "x2")
    model_id = "builtin:toy"
    constant_mass = True
    # x2 enters nonlinearly through g, so the two-step Euler property does not apply
    linear_index2 = False
    constant_q1 = False

    def eval_mass(self, x, t):
        return _MASS

    def eval_rhs(self, x, t):
        return np.array([g(x[2]), -x[2], x[1] - AMPLITUDE * math.sin(OMEGA * t)])

    def eval_rhs_jacobian(self, x, t):
        return np.array([[0.0, 0.0, dg(x[2])], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])

    def eval_rhs_time_derivative(self, x, t):
        return np.array([0.0, 0.0, -AMPLITUDE * OMEGA * math.cos(OMEGA * t)])

    def analytic_projectors(self, y, x, t):
        d = dg(x[2])
        A = _MASS.copy()
        Q = np.diag([0.0, 0.0, 1.0])
        P = np.diag([1.0, 1.0, 0.0])
        B = self.eval_rhs_jacobian(x, t)
        A1 = A + B @ Q
        P1 = np.array([[1.0, d, 0.0], [0.0, 0.0, 0.0], [0.0, -1.0, 1.0]])
        Q1 = np.eye(3) - P1
        G2 = A1 + B @ P @ Q1
        T = Q.copy()
        return ProjectorChain(
            A=A, Q=Q, P=P, B=B, A1=A1, Q1=Q1, P1=P1, G2=G2, T=T, U=np.eye(3) - T,
            PP1=P @ P1, eval_point=(np.array(y, float), np.array(x, float), t),
            source="analytic", ranks={"A": 2, "A1": 2, "G2": 3},
        )

    def analytic_consistentialize(self, x_hat, t):
        """Consistent state whose P P1 components match those of ``x_hat``.

        x1 and x2 follow from the explicit and hidden constraints; x0 solves
        ``P P1(x, t) (x - x_hat) = 0`` with the Jacobian of g taken at the new x2.
        """
        x2 = AMPLITUDE * OMEGA * math.cos(OMEGA * t)
        x1 = AMPLITUDE * math.sin(OMEGA * t)
        x0 = x_hat[0] + dg(x2) * (x_hat[1] - x1)
        return np.array([x0, x1, x2])


def toy_model() -> ToyIndex2Model:
    return ToyIndex2Model()
