"""Saturable inductance with a logistic transition between nominal and deep-saturation values.

Differential inductance::

    L(i) = L_deepsat + (L_nom - L_deepsat) / (1 + exp((|i| - I*) / (sigma I*)))

The flux is its closed-form integral from 0, which makes it odd in i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation


@dataclass(frozen=True)
class SaturableInductorParams:
    L_nom: float = 1e-3
    L_deepsat: float = 8e-4
    sigma: float = 5e-2
    I_star: float = 90.0

    def __post_init__(self):
        if not self.L_deepsat < self.L_nom:
            raise ContractViolation("L_deepsat must be smaller than L_nom")
        if self.sigma <= 0 or self.I_star <= 0:
            raise ContractViolation("sigma and I_star must be positive")
        if self.L_deepsat <= 0:
            raise ContractViolation("inductances must be positive")


def _softplus(z):
    return np.logaddexp(0.0, z)


def saturable_inductance(i, p: SaturableInductorParams):
    """Return ``(flux, differential_inductance)`` at current ``i``."""
    a = np.abs(i)
    c = p.sigma * p.I_star
    dL = p.L_nom - p.L_deepsat
    z = (a - p.I_star) / c
    # 1/(1+e^z) written via exp(-softplus(z)) to stay finite for large |z|
    L = p.L_deepsat + dL * np.exp(-_softplus(z))
    # int_0^a ds / (1 + exp((s - I*)/c)) = a - c [softplus(z) - softplus(-I*/c)]
    logistic_int = a - c * (_softplus(z) - _softplus(-p.I_star / c))
    flux = np.sign(i) * (p.L_deepsat * a + dL * logistic_int)
    if np.ndim(i) == 0:
        return float(flux), float(L)
    return flux, L


def saturable_flux(i, p: SaturableInductorParams) -> float:
    return saturable_inductance(i, p)[0]
