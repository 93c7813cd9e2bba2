import sys

import numpy as np
import pytest

from parareal_dae import DaeModel
from parareal_dae.models import fig2_circuit, toy_model


class LinearDae(DaeModel):
    """``A x' + B x + q(t) = 0`` with constant matrices."""

    constant_mass = True

    def __init__(self, A, B, q=None, dq=None, linear_index2=False, constant_q1=True):
        self.A = np.array(A, dtype=float)
        self.B = np.array(B, dtype=float)
        self.n_dof = self.A.shape[0]
        self.component_names = tuple(f"x{i}" for i in range(self.n_dof))
        self.model_id = "linear"
        self.q = q or (lambda t: np.zeros(self.n_dof))
        self.dq = dq
        self.linear_index2 = linear_index2
        self.constant_q1 = constant_q1

    def eval_mass(self, x, t):
        return self.A

    def eval_rhs(self, x, t):
        return self.B @ x + self.q(t)

    def eval_rhs_jacobian(self, x, t):
        return self.B.copy()

    def eval_rhs_time_derivative(self, x, t):
        if self.dq is None:
            return super().eval_rhs_time_derivative(x, t)
        return self.dq(t)


@pytest.fixture
def toy():
    return toy_model()


@pytest.fixture
def fig2():
    return fig2_circuit()


@pytest.fixture
def circuit():
    return fig2_circuit()[1]


def pytest_terminal_summary(terminalreporter):
    mod = next(
        (m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None
    )
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        terminalreporter.write_line(results[key])
