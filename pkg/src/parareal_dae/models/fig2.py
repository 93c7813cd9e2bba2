"""Reference topology of the nonlinear index-2 test circuit.

Node 1 is fed by the current source and drained by L1 to ground and by the
saturable L2 towards node 2; R11 and R12 both connect node 2 to ground. The
cutset {I1, L1, L2} around node 1 holds only inductors and a current source,
which makes the inductor voltages index-2 variables.
"""

from __future__ import annotations

from .mna import CircuitModel, assemble_flux_charge_mna
from .netlist import Netlist, parse_netlist

FIG2_NETLIST = """\
# index-2 circuit with a saturable inductor
I   I1  0 1 SIN 100 50 50 200
L   L1  1 0 1e-4
LNL L2  1 2 1e-3 8e-4 5e-2 90
R   R11 2 0 1e-2
R   R12 2 0 1e-2
"""


def fig2_circuit() -> tuple[Netlist, CircuitModel]:
    netlist = parse_netlist(FIG2_NETLIST)
    return netlist, assemble_flux_charge_mna(netlist, model_id="builtin:fig2")
