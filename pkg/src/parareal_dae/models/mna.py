"""Flux-charge modified nodal analysis.

Unknowns ``x = (e, q, i_L, phi, i_V)`` and residual rows::

    A_C q' + A_R g_R(A_R^T e) + A_L i_L + A_V i_V + A_I i_s(t) = 0
    q   - q_C(A_C^T e)                                       = 0
    phi' - A_L^T e                                           = 0
    phi - phi_L(i_L)                                         = 0
    A_V^T e - v_s(t)                                         = 0

The mass matrix is constant, inductor voltages and source currents enter
linearly, which is what the two-step implicit Euler property needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dae_core import DaeModel, numerical_rank
from ..errors import StructuralError
from .inductor import saturable_inductance
from .netlist import GROUND, Netlist


def incidence_matrix(netlist: Netlist, branches, reduced=True) -> np.ndarray:
    """Node-by-branch incidence: +1 at n+, -1 at n-; ground row dropped when reduced."""
    nodes = netlist.nodes
    A = np.zeros((len(nodes), len(branches)))
    for j, b in enumerate(branches):
        A[nodes.index(b.node_plus), j] += 1.0
        A[nodes.index(b.node_minus), j] -= 1.0
    return A[1:] if reduced else A


def _connected(netlist: Netlist) -> bool:
    parent = {n: n for n in netlist.nodes}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for b in netlist.branches:
        parent[find(b.node_plus)] = find(b.node_minus)
    return len({find(n) for n in netlist.nodes}) == 1


class CircuitModel(DaeModel):
    constant_mass = True
    linear_index2 = True
    constant_q1 = True

    def __init__(self, netlist: Netlist, model_id: str = "netlist"):
        self.netlist = netlist
        self.model_id = model_id
        self.node_names = netlist.nodes[1:]
        self.capacitors = netlist.of_kind("C")
        self.resistors = netlist.of_kind("R")
        self.inductors = netlist.of_kind("L", "LNL")
        self.vsources = netlist.of_kind("V")
        self.isources = netlist.of_kind("I")

        self.A_C = incidence_matrix(netlist, self.capacitors)
        self.A_R = incidence_matrix(netlist, self.resistors)
        self.A_L = incidence_matrix(netlist, self.inductors)
        self.A_V = incidence_matrix(netlist, self.vsources)
        self.A_I = incidence_matrix(netlist, self.isources)

        ne, nc, nl, nv = len(self.node_names), len(self.capacitors), len(self.inductors), len(self.vsources)
        o = np.cumsum([0, ne, nc, nl, nl, nv])
        self.sl_e, self.sl_q, self.sl_i, self.sl_phi, self.sl_v = (
            slice(o[k], o[k + 1]) for k in range(5)
        )
        self.n_dof = int(o[-1])
        self.component_names = tuple(
            [f"e_{n}" for n in self.node_names]
            + [f"q_{b.name}" for b in self.capacitors]
            + [f"i_{b.name}" for b in self.inductors]
            + [f"phi_{b.name}" for b in self.inductors]
            + [f"i_{b.name}" for b in self.vsources]
        )

        self.conductance = np.array([1.0 / b.value for b in self.resistors])
        self.capacitance = np.array([b.value for b in self.capacitors])
        self._linear_L = np.array(
            [b.value if b.kind == "L" else np.nan for b in self.inductors]
        )
        self._nonlinear = [
            (k, b.value) for k, b in enumerate(self.inductors) if b.kind == "LNL"
        ]

        # equation blocks share the offsets of the unknown blocks
        self.rows_kcl, self.rows_q, self.rows_phidot, self.rows_flux, self.rows_v = (
            self.sl_e, self.sl_q, self.sl_i, self.sl_phi, self.sl_v
        )
        n = self.n_dof
        M = np.zeros((n, n))
        M[self.rows_kcl, self.sl_q] = self.A_C
        M[self.rows_phidot, self.sl_phi] = np.eye(nl)
        M.setflags(write=False)
        self._mass = M

        # x-independent part of the Jacobian; the flux block is filled per call
        J = np.zeros((n, n))
        if self.resistors:
            J[self.rows_kcl, self.sl_e] = self.A_R @ np.diag(self.conductance) @ self.A_R.T
        J[self.rows_kcl, self.sl_i] = self.A_L
        J[self.rows_kcl, self.sl_v] = self.A_V
        J[self.rows_q, self.sl_q] = np.eye(nc)
        if nc:
            J[self.rows_q, self.sl_e] = -np.diag(self.capacitance) @ self.A_C.T
        J[self.rows_phidot, self.sl_e] = -self.A_L.T
        J[self.rows_flux, self.sl_phi] = np.eye(nl)
        J[self.rows_v, self.sl_e] = self.A_V.T
        self._J0 = J

        z = np.zeros(n)
        self.reference_point = (z, z, 0.0)

    # --- element laws -----------------------------------------------------

    def inductor_flux(self, i_L):
        """Flux and differential inductance of every inductor."""
        phi = self._linear_L * i_L
        L = self._linear_L.copy()
        for k, p in self._nonlinear:
            phi[k], L[k] = saturable_inductance(i_L[k], p)
        return phi, L

    def source_currents(self, t):
        return np.array([b.value(t) for b in self.isources])

    def source_voltages(self, t):
        return np.array([b.value(t) for b in self.vsources])

    def branch_voltages(self, x):
        """Voltages ``A_*^T e`` keyed by branch name."""
        e = np.asarray(x)[..., self.sl_e]
        nodes = self.netlist.nodes
        out = {}
        for b in self.netlist.branches:
            vp = 0.0 if b.node_plus == GROUND else e[..., nodes.index(b.node_plus) - 1]
            vm = 0.0 if b.node_minus == GROUND else e[..., nodes.index(b.node_minus) - 1]
            out[b.name] = vp - vm
        return out

    # --- DaeModel hooks ---------------------------------------------------

    def eval_mass(self, x, t):
        return self._mass

    def eval_rhs(self, x, t):
        e = x[self.sl_e]
        q = x[self.sl_q]
        i_L = x[self.sl_i]
        phi = x[self.sl_phi]
        i_V = x[self.sl_v]
        kcl = self.A_L @ i_L + self.A_V @ i_V
        if self.resistors:
            kcl = kcl + self.A_R @ (self.conductance * (self.A_R.T @ e))
        if self.isources:
            kcl = kcl + self.A_I @ self.source_currents(t)
        phi_L, _ = self.inductor_flux(i_L)
        parts = [
            kcl,
            q - self.capacitance * (self.A_C.T @ e),
            -self.A_L.T @ e,
            phi - phi_L,
            self.A_V.T @ e - self.source_voltages(t),
        ]
        return np.concatenate(parts)

    def eval_rhs_jacobian(self, x, t):
        J = self._J0.copy()
        _, L = self.inductor_flux(x[self.sl_i])
        J[self.rows_flux, self.sl_i] = -np.diag(L)
        return J

    def eval_rhs_time_derivative(self, x, t):
        d = np.zeros(self.n_dof)
        if self.isources:
            d[self.sl_e] = self.A_I @ np.array([b.value.derivative(t) for b in self.isources])
        if self.vsources:
            d[self.sl_v] = -np.array([b.value.derivative(t) for b in self.vsources])
        return d


@dataclass
class StructureReport:
    connected: bool
    voltage_sources_independent: bool
    no_current_cutsets: bool

    @property
    def ok(self) -> bool:
        return self.connected and self.voltage_sources_independent and self.no_current_cutsets


def check_structure(netlist: Netlist) -> StructureReport:
    ne = len(netlist.nodes) - 1
    A_V = incidence_matrix(netlist, netlist.of_kind("V"))
    A_rest = incidence_matrix(netlist, netlist.of_kind("C", "R", "L", "LNL", "V"))
    v_ok = A_V.shape[1] == 0 or numerical_rank(A_V) == A_V.shape[1]
    i_ok = ne == 0 or (A_rest.shape[1] > 0 and numerical_rank(A_rest) == ne)
    return StructureReport(_connected(netlist), v_ok, i_ok)


def assemble_flux_charge_mna(netlist: Netlist, model_id: str = "netlist") -> CircuitModel:
    """Build the flux-charge MNA model after topological sanity checks."""
    rep = check_structure(netlist)
    if not rep.connected:
        raise StructuralError("network is not connected")
    if not rep.voltage_sources_independent:
        names = [b.name for b in netlist.of_kind("V")]
        raise StructuralError(f"voltage sources {names} form a loop (A_V lacks full column rank)")
    if not rep.no_current_cutsets:
        names = [b.name for b in netlist.of_kind("I")]
        raise StructuralError(
            f"current sources {names} form a cutset ([A_C A_R A_L A_V] lacks full row rank)"
        )
    return CircuitModel(netlist, model_id)
