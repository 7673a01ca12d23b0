from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..qsim import GateOp, RegisterLayout


@dataclass(frozen=True)
class Marker:
    """Mid-circuit post-selection of ``register`` onto ``outcome`` before gate ``position``."""

    position: int
    register: str
    outcome: int = 0


@dataclass
class CircuitSpec:
    layout: RegisterLayout
    gates: list = field(default_factory=list)
    markers: list = field(default_factory=list)

    @property
    def cx_count(self) -> int:
        return sum(g.cx_cost for g in self.gates)

    def cx_by_tag(self) -> dict:
        out: Counter = Counter()
        for g in self.gates:
            out[g.tag] += g.cx_cost
        return dict(out)

    def segment(self, tag: str) -> list:
        return [g for g in self.gates if g.tag == tag]

    def append(self, gates, tag: str | None = None) -> "CircuitSpec":
        for g in gates:
            if tag is not None and g.tag != tag:
                g = GateOp(g.kind, g.targets, g.controls, g.params, g.matrix, g.cx_cost, tag)
            self.gates.append(g)
        return self

    def extend(self, other: "CircuitSpec") -> "CircuitSpec":
        offset = len(self.gates)
        self.gates.extend(other.gates)
        self.markers.extend(Marker(m.position + offset, m.register, m.outcome) for m in other.markers)
        return self

    def add_marker(self, register: str, outcome: int = 0) -> "CircuitSpec":
        self.markers.append(Marker(len(self.gates), register, outcome))
        return self

    def adjoint(self, tag: str | None = None) -> "CircuitSpec":
        gates = [g.adjoint() for g in reversed(self.gates)]
        out = CircuitSpec(self.layout)
        return out.append(gates, tag)

    def without(self, *tags: str) -> "CircuitSpec":
        """Copy with every gate carrying one of ``tags`` removed (markers kept in place)."""
        out = CircuitSpec(self.layout)
        remap, kept = {}, 0
        for i, g in enumerate(self.gates):
            remap[i] = kept
            if g.tag not in tags:
                out.gates.append(g)
                kept += 1
        remap[len(self.gates)] = kept
        out.markers = [Marker(remap[m.position], m.register, m.outcome) for m in self.markers]
        return out

    def to_text(self) -> str:
        lines = [f"LAYOUT {json.dumps(self.layout.as_dict())}"]
        by_pos: dict = {}
        for m in self.markers:
            by_pos.setdefault(m.position, []).append(m)
        for i, g in enumerate(self.gates + [None]):
            for m in by_pos.get(i, []):
                lines.append(f"MARKER postselect {m.register} {m.outcome}")
            if g is None:
                break
            targets = ",".join(map(str, g.targets))
            controls = ",".join(f"{q}{'' if p else 'o'}" for q, p in g.controls) or "-"
            if g.kind in ("u2", "mux"):
                params = json.dumps(np.asarray(g.matrix).real.round(15).tolist()) if g.kind == "mux" else \
                    json.dumps([[[z.real, z.imag] for z in row] for row in np.asarray(g.matrix)])
            else:
                params = ",".join(repr(float(p)) for p in g.params) or "-"
            lines.append(f"GATE {g.kind} {targets} {controls} {params} tag={g.tag or '-'} // cx_cost={g.cx_cost}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CircuitSpec":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines[0].startswith("LAYOUT "):
            raise ValueError("missing LAYOUT line")
        out = cls(RegisterLayout(**json.loads(lines[0][7:])))
        for ln in lines[1:]:
            if ln.startswith("MARKER"):
                _, _, reg, outcome = ln.split()
                out.add_marker(reg, int(outcome))
                continue
            body, cost = ln.split(" // cx_cost=")
            _, kind, targets, controls, rest = body.split(" ", 4)
            params, tag = rest.rsplit(" tag=", 1)
            tgts = tuple(int(t) for t in targets.split(","))
            ctrls = () if controls == "-" else tuple(
                (int(c[:-1]), 0) if c.endswith("o") else (int(c), 1) for c in controls.split(","))
            matrix, pvals = None, ()
            if kind == "u2":
                matrix = np.array([[complex(a, b) for a, b in row] for row in json.loads(params)])
            elif kind == "mux":
                matrix = np.array(json.loads(params))
            elif params != "-":
                pvals = tuple(float(p) for p in params.split(","))
            out.gates.append(GateOp(kind, tgts, ctrls, pvals, matrix, int(cost), "" if tag == "-" else tag))
        return out
