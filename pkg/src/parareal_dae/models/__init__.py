from .fig2 import FIG2_NETLIST, fig2_circuit
from .inductor import SaturableInductorParams, saturable_inductance
from .mna import CircuitModel, assemble_flux_charge_mna, check_structure, incidence_matrix
from .netlist import Branch, Netlist, Waveform, parse_netlist
from .toy import ToyIndex2Model, toy_model

__all__ = [
    "FIG2_NETLIST",
    "Branch",
    "CircuitModel",
    "Netlist",
    "SaturableInductorParams",
    "ToyIndex2Model",
    "Waveform",
    "assemble_flux_charge_mna",
    "check_structure",
    "fig2_circuit",
    "incidence_matrix",
    "parse_netlist",
    "saturable_inductance",
    "toy_model",
]
