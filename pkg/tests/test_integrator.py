import math

import numpy as np
import pytest
from conftest import LinearDae

from parareal_dae import (
    ContractViolation,
    NewtonConfig,
    NewtonError,
    StepError,
    Trajectory,
    euler_step,
    integrate,
    newton_solve,
)
from parareal_dae.integrator import time_grid
from parareal_dae.models.toy import AMPLITUDE, OMEGA, g


def scalar(f, df):
    return (lambda x: np.array([f(x[0])])), (lambda x: np.array([[df(x[0])]]))


def test_newton_quadratic_root():
    r, J = scalar(lambda x: x * x - 4.0, lambda x: 2 * x)
    x = newton_solve(r, J, [3.0])
    assert abs(x[0] - 2.0) < 1e-10


def test_newton_zero_iterations_when_converged():
    calls = []

    def J(x):
        calls.append(x)
        return np.eye(1)

    x = newton_solve(lambda x: x, J, [0.0])
    assert x[0] == 0.0 and not calls


def test_newton_damping_rescues_overshoot():
    # arctan: undamped Newton from 1.5 diverges
    r, J = scalar(math.atan, lambda x: 1.0 / (1 + x * x))
    x = newton_solve(r, J, [1.5])
    assert abs(x[0]) < 1e-10


def test_newton_failure_reports_best_iterate():
    r, J = scalar(lambda x: x * x + 1.0, lambda x: 2 * x)
    with pytest.raises(NewtonError) as info:
        newton_solve(r, J, [0.5], NewtonConfig(max_iterations=5))
    assert info.value.best is not None
    assert info.value.residual_norm >= 1.0


def test_newton_config_validation():
    with pytest.raises(ContractViolation):
        NewtonConfig(abs_tol=0)
    with pytest.raises(ContractViolation):
        NewtonConfig(max_iterations=0)


def test_euler_scalar_decay():
    m = LinearDae([[1.0]], [[1.0]])
    x = euler_step(m, [1.0], 0.1, 0.1)
    assert abs(x[0] - 1 / 1.1) < 1e-14


def test_euler_step_rejects_bad_h(toy):
    with pytest.raises(ContractViolation):
        euler_step(toy, np.zeros(3), 0.1, 0.0)


def test_toy_first_step_from_inconsistent(toy):
    h = 1 / 3
    x1 = euler_step(toy, [0.0, -1.0, 0.0], h, h)
    s = AMPLITUDE * math.sin(OMEGA * h)
    assert abs(x1[1] - s) < 1e-12
    assert abs(x1[2] - (s + 1) / h) < 1e-10


def test_toy_two_steps_consistent_start(toy):
    h = 1 / 3
    x = np.array([0.0, 0.0, 0.3 * math.pi])
    for t in (h, 2 * h):
        x = euler_step(toy, x, t, h)
    assert abs(x[0]) < 1e-12


def test_toy_two_steps_counterexample(toy):
    h = 1 / 3
    x = np.array([0.0, -1.0, 0.0])
    for t in (h, 2 * h):
        x = euler_step(toy, x, t, h)
    expected = -g(0.045 * math.sin(20 * math.pi / 3) + 3) / 3
    assert abs(x[0] - expected) < 1e-9
    assert abs(expected + 0.22714) < 1e-5


def test_step_error_carries_context():
    class Stiff(LinearDae):
        def eval_rhs(self, x, t):
            return np.array([x[0] ** 2 + 1.0])

        def eval_rhs_jacobian(self, x, t):
            return np.array([[2 * x[0]]])

    m = Stiff([[0.0]], [[0.0]])
    with pytest.raises(StepError) as info:
        euler_step(m, [0.5], 0.1, 0.1, NewtonConfig(max_iterations=4))
    assert info.value.t_next == 0.1 and info.value.h == 0.1


def test_time_grid_shortens_last_step():
    T = time_grid(0.0, 1.0, 0.3)
    np.testing.assert_allclose(T, [0, 0.3, 0.6, 0.9, 1.0])


def test_time_grid_absorbs_round_off():
    T = time_grid(0.0, 1.0 / 21, 1e-5)
    assert T[-1] == 1.0 / 21 and np.all(np.diff(T) > 0.5e-5)


def test_integrate_zero_span(toy):
    tr = integrate(toy, [0, 0, 0.3 * math.pi], 0.5, 0.5, 1e-3)
    assert len(tr) == 1


def test_integrate_toy_tracks_exact_solution(toy):
    h = 1e-4
    tr = integrate(toy, [0, 0, 0.3 * math.pi], 0.0, 0.1, h)
    assert np.max(np.abs(tr.component("x0"))) <= 1e-8
    err = np.abs(tr.states[:, 2] - 0.3 * math.pi * np.cos(OMEGA * tr.times))
    assert err.max() <= 5 * h * OMEGA**2 * 0.3 * math.pi


def test_integrate_circuit_keeps_constraints(circuit):
    from parareal_dae.init import warmup_consistentialize

    x0 = warmup_consistentialize(circuit, np.zeros(circuit.n_dof), 0.0, 1e-5)
    tr = integrate(circuit, x0, 0.0, 5e-3, 1e-5)
    res = np.array([circuit.algebraic_residual(x, t) for t, x in zip(tr.times, tr.states)])
    assert np.abs(res).max() <= 10 * NewtonConfig().abs_tol


def _index1_model():
    # x0' = -x0 + x1, 0 = x1 - sin(t); exact x0 for x0(0) = 0:
    # x0 = (sin t - cos t + e^{-t}) / 2
    return LinearDae(
        np.diag([1.0, 0.0]),
        [[1.0, -1.0], [0.0, 1.0]],
        q=lambda t: np.array([0.0, -math.sin(t)]),
        dq=lambda t: np.array([0.0, -math.cos(t)]),
    )


def test_convergence_order_index1():
    m = _index1_model()
    exact = (math.sin(1) - math.cos(1) + math.exp(-1)) / 2
    errs = []
    hs = [1e-2, 5e-3, 2.5e-3]
    for h in hs:
        errs.append(abs(integrate(m, [0.0, 0.0], 0.0, 1.0, h).final[0] - exact))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 1.0) < 0.1), orders


def test_trajectory_validation():
    with pytest.raises(ContractViolation):
        Trajectory(times=[0, 0], states=[[0], [0]], step_size=1.0)
    tr = Trajectory(times=[0, 1], states=[[0, 1], [2, 3]], step_size=1.0, component_names=("a", "b"))
    np.testing.assert_array_equal(tr.component("b"), [1, 3])
