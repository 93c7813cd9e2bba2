"""Line-oriented netlist format.

One branch per line, ``#`` starts a comment::

    R   <name> <n+> <n-> <ohms>
    C   <name> <n+> <n-> <farads>
    L   <name> <n+> <n-> <henries>
    LNL <name> <n+> <n-> <L_nom> <L_deepsat> <sigma> <I_star>
    I   <name> <n+> <n-> SIN <amp1> <freq1_Hz> [<amp2> <freq2_Hz> ...]
    V   <name> <n+> <n-> SIN <amp1> <freq1_Hz> [...]  |  DC <volts>

Branch current flows from n+ through the element to n-. Node "0" is ground.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

from ..errors import ContractViolation, NetlistError
from .inductor import SaturableInductorParams

GROUND = "0"
KINDS = ("R", "C", "L", "LNL", "I", "V")


@dataclass(frozen=True)
class Waveform:
    """``offset + sum_k amp_k sin(2 pi f_k t)``."""

    amplitudes: tuple = ()
    frequencies: tuple = ()
    offset: float = 0.0

    def __call__(self, t: float) -> float:
        v = self.offset
        for a, f in zip(self.amplitudes, self.frequencies):
            v += a * math.sin(2 * math.pi * f * t)
        return v

    def derivative(self, t: float) -> float:
        v = 0.0
        for a, f in zip(self.amplitudes, self.frequencies):
            w = 2 * math.pi * f
            v += a * w * math.cos(w * t)
        return v


@dataclass(frozen=True)
class Branch:
    kind: str
    name: str
    node_plus: str
    node_minus: str
    value: Union[float, SaturableInductorParams, Waveform]
    lineno: Optional[int] = None


@dataclass
class Netlist:
    branches: list = field(default_factory=list)

    @property
    def nodes(self) -> list:
        """Ground first, then other nodes in order of appearance."""
        seen = [GROUND]
        for b in self.branches:
            for n in (b.node_plus, b.node_minus):
                if n not in seen:
                    seen.append(n)
        return seen

    def of_kind(self, *kinds) -> list:
        return [b for b in self.branches if b.kind in kinds]

    def without(self, *names) -> "Netlist":
        missing = set(names) - {b.name for b in self.branches}
        if missing:
            raise ContractViolation(f"no such branches: {sorted(missing)}")
        return Netlist([b for b in self.branches if b.name not in names])

    def validate(self):
        names = set()
        for b in self.branches:
            if b.name in names:
                raise NetlistError(f"duplicate branch name {b.name!r}", b.lineno)
            names.add(b.name)
            if b.node_plus == b.node_minus:
                raise NetlistError(
                    f"branch {b.name!r} is dangling: both terminals on node {b.node_plus!r}",
                    b.lineno,
                )
        if not self.branches:
            raise NetlistError("netlist contains no branches")
        if not any(GROUND in (b.node_plus, b.node_minus) for b in self.branches):
            raise NetlistError("no branch is connected to ground node '0'")
        return self

    def to_text(self) -> str:
        lines = []
        for b in self.branches:
            head = f"{b.kind} {b.name} {b.node_plus} {b.node_minus}"
            v = b.value
            if isinstance(v, SaturableInductorParams):
                lines.append(f"{head} {v.L_nom!r} {v.L_deepsat!r} {v.sigma!r} {v.I_star!r}")
            elif isinstance(v, Waveform):
                if v.amplitudes:
                    pairs = " ".join(f"{a!r} {f!r}" for a, f in zip(v.amplitudes, v.frequencies))
                    lines.append(f"{head} SIN {pairs}")
                else:
                    lines.append(f"{head} DC {v.offset!r}")
            else:
                lines.append(f"{head} {v!r}")
        return "\n".join(lines) + "\n"


def _number(tok, lineno, what):
    try:
        v = float(tok)
    except ValueError:
        raise NetlistError(f"malformed {what} {tok!r}", lineno) from None
    if not math.isfinite(v):
        raise NetlistError(f"non-finite {what} {tok!r}", lineno)
    return v


def _source(kind, toks, lineno):
    if not toks:
        raise NetlistError("source needs SIN or DC specification", lineno)
    form = toks[0].upper()
    vals = [_number(t, lineno, "source parameter") for t in toks[1:]]
    if form == "SIN":
        if not vals or len(vals) % 2:
            raise NetlistError("SIN expects amplitude/frequency pairs", lineno)
        return Waveform(tuple(vals[0::2]), tuple(vals[1::2]))
    if form == "DC" and kind == "V":
        if len(vals) != 1:
            raise NetlistError("DC expects a single value", lineno)
        return Waveform(offset=vals[0])
    raise NetlistError(f"unsupported source form {toks[0]!r} for {kind}", lineno)


def parse_netlist(text: str) -> Netlist:
    branches = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        kind = toks[0].upper()
        if kind not in KINDS:
            raise NetlistError(f"unknown element kind {toks[0]!r}", lineno)
        if len(toks) < 5:
            raise NetlistError(f"{kind} line needs name, two nodes and parameters", lineno)
        name, n_plus, n_minus, params = toks[1], toks[2], toks[3], toks[4:]
        if kind in ("R", "C", "L"):
            if len(params) != 1:
                raise NetlistError(f"{kind} expects exactly one value", lineno)
            value = _number(params[0], lineno, "element value")
            if value <= 0:
                raise NetlistError(f"{kind} value must be positive", lineno)
        elif kind == "LNL":
            if len(params) != 4:
                raise NetlistError("LNL expects L_nom L_deepsat sigma I_star", lineno)
            nums = [_number(p, lineno, "inductor parameter") for p in params]
            try:
                value = SaturableInductorParams(*nums)
            except ContractViolation as exc:
                raise NetlistError(str(exc), lineno) from None
        else:
            value = _source(kind, params, lineno)
        branches.append(Branch(kind, name, n_plus, n_minus, value, lineno))
    return Netlist(branches).validate()
