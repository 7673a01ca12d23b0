"""Direction-controlled cyclic shifts of the grid register, and flag checks."""
from __future__ import annotations

from ..lattice import Grid, LatticeModel
from ..qsim import GateOp, RegisterLayout
from .base import CircuitSpec
from .costs import ladder_ancillas, rung_cost

ENCODINGS = ("dense", "one_hot")


def direction_width(model: LatticeModel, encoding: str) -> int:
    if encoding == "dense":
        return model.n_dense
    if encoding == "one_hot":
        return model.M
    raise ValueError(f"unknown direction encoding {encoding!r}")


def make_layout(model: LatticeModel, grid: Grid, encoding: str, flags: int = 0,
                ancillas: bool = True) -> RegisterLayout:
    n_d = direction_width(model, encoding)
    dir_controls = 1 if encoding == "one_hot" else n_d
    anc = ladder_ancillas(max(grid.axis_qubits), dir_controls) if ancillas else 0
    return RegisterLayout(grid.n_qubits, n_d, anc, flags)


def direction_controls(layout: RegisterLayout, encoding: str, i: int) -> tuple:
    dq = layout.qubits("direction")
    if encoding == "one_hot":
        return ((dq[i], 1),)
    if i >= 2 ** len(dq):
        raise ValueError(f"direction {i} has no {len(dq)}-bit code word")
    return tuple((q, (i >> b) & 1) for b, q in enumerate(dq))


def shift_gates(grid: Grid, axis: int, step: int, controls: tuple, scheme: str = "ancilla") -> list:
    """Cyclic +1 / -1 on one coordinate register as a descending C^nX ladder.

    The rung on bit j is controlled on bits 0..j-1 (closed for +1, open for -1)
    plus ``controls``; rungs run from the top bit down.
    """
    if step not in (1, -1):
        raise ValueError("streaming shifts are +-1 site")
    if scheme not in ("ancilla", "naive"):
        raise ValueError(f"unsupported scheme {scheme!r}")
    off, m = grid.axis_offset(axis), grid.axis_qubits[axis]
    pol = 1 if step == 1 else 0
    gates = []
    for j in reversed(range(m)):
        ctrl = tuple((off + b, pol) for b in range(j)) + tuple(controls)
        gates.append(GateOp("x", (off + j,), ctrl, cx_cost=rung_cost(len(ctrl), j, scheme), tag="stream"))
    return gates


def direction_streaming(model: LatticeModel, grid: Grid, layout: RegisterLayout, encoding: str, i: int,
                        scheme: str = "ancilla") -> list:
    ctrl = direction_controls(layout, encoding, i)
    gates = []
    for axis, c in enumerate(model.velocities[i]):
        if c:
            gates += shift_gates(grid, axis, c, ctrl, scheme)
    return gates


def streaming_circuit(model: LatticeModel, grid: Grid, encoding: str, scheme: str = "ancilla",
                      layout: RegisterLayout | None = None) -> CircuitSpec:
    """U_S: product over non-rest directions of direction-controlled shifts S_i."""
    if model.d != grid.d:
        raise ValueError("model and grid dimensions differ")
    if scheme not in ("ancilla", "naive"):
        raise ValueError(f"unsupported scheme {scheme!r}")
    layout = layout or make_layout(model, grid, encoding)
    circ = CircuitSpec(layout)
    for i in range(1, model.M):
        circ.append(direction_streaming(model, grid, layout, encoding, i, scheme))
    return circ


def flag_check_gates(layout: RegisterLayout, flag: int, encoding: str = "one_hot") -> list:
    """Parity of the one-hot direction register onto flag ancilla ``flag``."""
    if encoding != "one_hot":
        raise ValueError("flag checks need the one-hot direction encoding")
    fq = layout.qubits("flag")[flag]
    return [GateOp("x", (fq,), ((q, 1),), cx_cost=1, tag="flag") for q in layout.qubits("direction")]


def flag_check_circuit(layout: RegisterLayout, flag: int = 0, encoding: str = "one_hot") -> CircuitSpec:
    return CircuitSpec(layout).append(flag_check_gates(layout, flag, encoding))
