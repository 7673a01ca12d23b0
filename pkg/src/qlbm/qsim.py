"""Dense statevector simulator with register bookkeeping.

Qubit 0 is the least significant bit of the basis index. Registers are laid
out contiguously: grid, direction, cnx-ancilla, flag (from qubit 0 upward).
Gates act on an ``(2,)*n`` view of the amplitude vector, so controlled gates
touch only the slice where every control matches its polarity.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_QUBITS = 30
POSTSELECT_FLOOR = 1e-14


class PostSelectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class RegisterLayout:
    grid: int
    direction: int = 0
    ancilla: int = 0
    flag: int = 0

    def __post_init__(self):
        if min(self.grid, self.direction, self.ancilla, self.flag) < 0:
            raise ValueError("register sizes must be non-negative")
        if self.n < 1:
            raise ValueError("layout has no qubits")
        if self.n > MAX_QUBITS:
            raise ValueError(f"layout needs {self.n} qubits; dense simulation is capped at {MAX_QUBITS}")

    @property
    def n(self) -> int:
        return self.grid + self.direction + self.ancilla + self.flag

    def qubits(self, register: str) -> list[int]:
        start = 0
        for name in ("grid", "direction", "ancilla", "flag"):
            size = getattr(self, name)
            if name == register:
                return list(range(start, start + size))
            start += size
        raise KeyError(f"unknown register {register!r}")

    def split(self, array: np.ndarray) -> np.ndarray:
        """View a length-2^n array as (flag, ancilla, direction, grid)."""
        return array.reshape(2**self.flag, 2**self.ancilla, 2**self.direction, 2**self.grid)

    def as_dict(self) -> dict:
        return {"grid": self.grid, "direction": self.direction, "ancilla": self.ancilla, "flag": self.flag}


@dataclass(frozen=True)
class GateOp:
    """One gate. ``controls`` are (qubit, polarity) pairs; polarity 0 is an open control.

    kinds: x, h, ry(theta), u2(matrix on targets a,b; basis index 2*a+b),
    rbs(theta; |10> -> cos(theta/2)|10> + sin(theta/2)|01>), mux (per-grid-state
    Householder reflection on the direction register, table of shape (2^nG, 2^nD)).
    """

    kind: str
    targets: tuple
    controls: tuple = ()
    params: tuple = ()
    matrix: np.ndarray | None = field(default=None, compare=False, repr=False)
    cx_cost: int = 0
    tag: str = ""

    def __post_init__(self):
        if self.kind not in ("x", "h", "ry", "u2", "rbs", "mux"):
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.cx_cost < 0:
            raise ValueError("cx_cost must be non-negative")
        if self.kind == "u2":
            m = np.asarray(self.matrix, dtype=complex)
            if m.shape != (4, 4) or not np.allclose(m.conj().T @ m, np.eye(4), atol=1e-10):
                raise ValueError("u2 gate matrix is not a 4x4 unitary")
        qs = list(self.targets) + [q for q, _ in self.controls]
        if self.kind != "mux" and len(set(qs)) != len(qs):
            raise ValueError("gate qubits overlap")

    @property
    def name(self) -> str:
        nc = len(self.controls)
        if self.kind == "x":
            return {0: "X", 1: "CX"}.get(nc, f"C{nc}X")
        base = {"h": "H", "ry": "RY", "u2": "U2", "rbs": "RBS", "mux": "MUX"}[self.kind]
        return base if nc == 0 or self.kind == "mux" else f"C{nc}{base}"

    @property
    def qubits(self) -> list[int]:
        return list(self.targets) + [q for q, _ in self.controls]

    def adjoint(self) -> "GateOp":
        if self.kind in ("x", "h", "mux"):
            return self
        if self.kind in ("ry", "rbs"):
            return GateOp(self.kind, self.targets, self.controls, (-self.params[0],), None, self.cx_cost, self.tag)
        return GateOp("u2", self.targets, self.controls, (), np.asarray(self.matrix).conj().T, self.cx_cost, self.tag)


@dataclass
class MeasurementRecord:
    register: str
    outcome: int
    probability: float


@dataclass
class QuantumState:
    amplitudes: np.ndarray
    layout: RegisterLayout
    records: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.layout.n

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def copy(self) -> "QuantumState":
        return QuantumState(self.amplitudes.copy(), self.layout, list(self.records))

    def grid_amplitudes(self, direction: int = 0) -> np.ndarray:
        """Grid-register amplitudes with every other register in the given/zero state."""
        return self.layout.split(self.amplitudes)[0, 0, direction].copy()


def init_state(layout: RegisterLayout) -> QuantumState:
    amps = np.zeros(2**layout.n, dtype=complex)
    amps[0] = 1.0
    return QuantumState(amps, layout)


def load_exact_amplitudes(state: QuantumState, values: np.ndarray) -> QuantumState:
    """Amplitude-encode a field on the grid register; other registers must be |0>."""
    values = np.asarray(values, dtype=float).ravel()
    layout = state.layout
    if values.size != 2**layout.grid:
        raise ValueError(f"field has {values.size} sites, grid register holds {2**layout.grid}")
    nrm = np.linalg.norm(values)
    if nrm == 0:
        raise ValueError("cannot load a zero-norm field")
    view = layout.split(state.amplitudes)
    rest = np.abs(state.amplitudes).sum() - np.abs(view[0, 0, 0]).sum()
    if rest > 1e-12:
        raise ValueError("non-grid registers are not in |0>")
    amps = np.zeros_like(state.amplitudes)
    layout.split(amps)[0, 0, 0] = values / nrm
    return QuantumState(amps, layout, list(state.records))


def _slicer(n: int, fixed: dict) -> tuple:
    sl = [slice(None)] * n
    for q, v in fixed.items():
        sl[n - 1 - q] = v
    return tuple(sl)


_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def _ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _rbs(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    # basis |ab> index 2a+b
    return np.array([[1, 0, 0, 0], [0, c, s, 0], [0, -s, c, 0], [0, 0, 0, 1]], dtype=complex)


def gate_matrix(gate: GateOp) -> np.ndarray | None:
    if gate.kind == "h":
        return _H
    if gate.kind == "ry":
        return _ry(gate.params[0])
    if gate.kind == "rbs":
        return _rbs(gate.params[0])
    if gate.kind == "u2":
        return np.asarray(gate.matrix, dtype=complex)
    return None


def apply_gate(psi: np.ndarray, gate: GateOp, layout: RegisterLayout) -> None:
    """Apply in place to a ``(2,)*n`` view."""
    n = layout.n
    if any(q >= n or q < 0 for q in gate.qubits):
        raise ValueError(f"gate {gate.name} addresses a qubit outside 0..{n - 1}")
    ctrl = dict(gate.controls)
    if gate.kind == "mux":
        _apply_mux(psi, gate, layout)
        return
    if gate.kind == "x":
        (t,) = gate.targets
        s0, s1 = _slicer(n, {**ctrl, t: 0}), _slicer(n, {**ctrl, t: 1})
        tmp = psi[s0].copy()
        psi[s0] = psi[s1]
        psi[s1] = tmp
        return
    m = gate_matrix(gate)
    if len(gate.targets) == 1:
        (t,) = gate.targets
        s0, s1 = _slicer(n, {**ctrl, t: 0}), _slicer(n, {**ctrl, t: 1})
        a, b = psi[s0].copy(), psi[s1].copy()
        psi[s0] = m[0, 0] * a + m[0, 1] * b
        psi[s1] = m[1, 0] * a + m[1, 1] * b
        return
    qa, qb = gate.targets
    sl = [_slicer(n, {**ctrl, qa: i >> 1, qb: i & 1}) for i in range(4)]
    old = [psi[s].copy() for s in sl]
    for r in range(4):
        acc = 0
        for c in range(4):
            if m[r, c] != 0:
                acc = acc + m[r, c] * old[c]
        psi[sl[r]] = acc


def _apply_mux(psi: np.ndarray, gate: GateOp, layout: RegisterLayout) -> None:
    # Householder I - 2 v v^T per grid basis state, acting on the direction register
    v = np.asarray(gate.matrix, dtype=float)
    flat = psi.reshape(-1, 2**layout.direction, 2**layout.grid)
    proj = np.einsum("gd,rdg->rg", v, flat)
    flat -= 2 * np.einsum("gd,rg->rdg", v, proj)


def apply_circuit(state: QuantumState, circuit, check_norm: bool = True) -> QuantumState:
    """Run every gate in order; post-selection markers are applied at their positions."""
    out = state.copy()
    psi = out.amplitudes.reshape((2,) * out.n)
    markers = sorted(getattr(circuit, "markers", []), key=lambda m: m.position)
    mi = 0
    for pos, gate in enumerate(circuit.gates):
        while mi < len(markers) and markers[mi].position == pos:
            out = _marker(out, markers[mi])
            psi = out.amplitudes.reshape((2,) * out.n)
            mi += 1
        apply_gate(psi, gate, out.layout)
    while mi < len(markers):
        out = _marker(out, markers[mi])
        mi += 1
    if check_norm and abs(out.norm() - 1) > 1e-10:
        raise RuntimeError(f"norm drifted to {out.norm()}")
    return out


def _marker(state: QuantumState, marker) -> QuantumState:
    new, _ = post_select(state, marker.register, marker.outcome)
    return new


def post_select(state: QuantumState, register, outcome: int = 0) -> tuple[QuantumState, float]:
    """Project ``register`` (name or qubit list) onto ``outcome`` and renormalize."""
    qubits = state.layout.qubits(register) if isinstance(register, str) else list(register)
    n = state.n
    amps = state.amplitudes.copy()
    psi = amps.reshape((2,) * n)
    for bit, q in enumerate(qubits):
        want = (outcome >> bit) & 1
        psi[_slicer(n, {q: 1 - want})] = 0
    p = float(np.vdot(amps, amps).real)
    if p < POSTSELECT_FLOOR:
        raise PostSelectionError(f"post-selection of {register} = {outcome} has probability {p:.3e}")
    amps /= np.sqrt(p)
    name = register if isinstance(register, str) else "qubits" + ",".join(map(str, qubits))
    records = list(state.records) + [MeasurementRecord(name, outcome, p)]
    return QuantumState(amps, state.layout, records), p


def sample_shots(probabilities: np.ndarray, shots: int, seed: int) -> np.ndarray:
    """Multinomial draw; returns a count per basis index (deterministic in ``seed``)."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p = np.clip(np.asarray(probabilities, dtype=float).ravel(), 0, None)
    p = p / p.sum()
    return np.random.default_rng(seed).multinomial(shots, p)


def counts_to_dict(counts: np.ndarray, n: int) -> dict:
    return {format(int(i), f"0{n}b"): int(counts[i]) for i in np.flatnonzero(counts)}


def counts_from_dict(data: dict, n: int) -> np.ndarray:
    out = np.zeros(2**n, dtype=np.int64)
    for key, c in data.items():
        out[int(key, 2)] = c
    return out


def apply_depolarizing(probabilities: np.ndarray, lam: float, n: int) -> np.ndarray:
    """Global depolarizing channel on an outcome distribution: (1-lam) p + lam / 2^n."""
    if not 0 <= lam <= 1:
        raise ValueError(f"lambda={lam} outside [0, 1]")
    p = np.asarray(probabilities, dtype=float)
    return (1 - lam) * p + lam / 2**n
