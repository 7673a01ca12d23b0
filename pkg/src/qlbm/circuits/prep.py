"""PREP / UNPREP: direction-register state preparation for the LCU collision.

PREP|x>|0> = |x> sum_i sqrt(k_i(x)) |i>.  For velocity fields whose +c/-c pair
weights vary as sin(2 pi f x_a) along an axis the direction does not move on,
the position dependence is a grid-controlled rotation ladder on top of a fixed
preparation; anything else falls back to a per-site multiplexed reflection.
"""
from __future__ import annotations

import numpy as np

from ..lattice import Grid, KField, LatticeModel, VelocityField, check_stochastic_consistency, shift
from ..qsim import GateOp, RegisterLayout
from .base import CircuitSpec
from .costs import RBS_COST, controlled_rotation_cost


def _validate_weights(k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if np.any(k < -1e-12) or abs(k.sum() - 1) > 1e-10:
        raise ValueError("direction weights must be non-negative and sum to 1")
    return np.clip(k, 0, None)


def dense_tree_gates(amps, qubits: list, controls: tuple = ()) -> list:
    """Binary-tree RY preparation of a real (possibly signed) amplitude vector."""
    n = len(qubits)
    a = np.zeros(2**n)
    a[: len(amps)] = amps
    gates = []
    for level in range(n):
        q = n - 1 - level  # bit being split
        width = 2 ** (q + 1)
        for prefix in range(2**level):
            block = a[prefix * width:(prefix + 1) * width]
            lo, hi = block[: width // 2], block[width // 2:]
            if q == 0:
                if lo[0] == 0 and hi[0] == 0:
                    continue
                theta = 2 * np.arctan2(hi[0], lo[0])
            else:
                n0, n1 = np.linalg.norm(lo), np.linalg.norm(hi)
                if n0 == 0 and n1 == 0:
                    continue
                theta = 2 * np.arctan2(n1, n0)
            if abs(theta) < 1e-15:
                continue
            # block index bits above q are the prefix; bit q is the split
            ctrl = tuple((qubits[q + 1 + b], (prefix >> b) & 1) for b in range(level))
            ctrl = ctrl + tuple(controls)
            gates.append(GateOp("ry", (qubits[q],), ctrl, (theta,), cx_cost=controlled_rotation_cost(len(ctrl))))
    return gates


def unary_cascade_gates(amps, qubits: list) -> list:
    """X on the first qubit, then a chain of RBS partial swaps down the register."""
    a = np.asarray(amps, dtype=float)
    M = len(qubits)
    gates = [GateOp("x", (qubits[0],))]
    tail = np.sqrt(np.cumsum((a**2)[::-1])[::-1])  # tail[j] = ||a[j:]||
    for j in range(M - 1):
        if tail[j] < 1e-15:
            break
        rest = a[M - 1] if j == M - 2 else tail[j + 1]
        theta = 2 * np.arctan2(rest, a[j])
        gates.append(GateOp("rbs", (qubits[j], qubits[j + 1]), (), (theta,), cx_cost=RBS_COST))
    return gates


def _code_vector(amps, encoding: str, n_d: int) -> np.ndarray:
    v = np.zeros(2**n_d)
    for i, x in enumerate(amps):
        v[i if encoding == "dense" else 1 << i] = x
    return v


def prep_circuit(k, encoding: str, layout: RegisterLayout) -> CircuitSpec:
    """Uniform PREP: |0>_D -> sum_i sqrt(k_i) |i>_D (binary code words or one-hot |e_i>)."""
    k = _validate_weights(k)
    dq = layout.qubits("direction")
    amps = np.sqrt(k)
    if encoding == "dense":
        if len(k) > 2 ** len(dq):
            raise ValueError("too many directions for the dense register")
        gates = dense_tree_gates(amps, dq)
    elif encoding == "one_hot":
        if len(k) != len(dq):
            raise ValueError("one-hot register width must equal the direction count")
        gates = unary_cascade_gates(amps, dq)
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    return CircuitSpec(layout).append(gates, "prep")


def _pair_law(model: LatticeModel, vel: VelocityField, i: int):
    """For direction i return ('const', None) or ('sin', (sigma, freq, axis)) or None."""
    if vel.table is not None:
        return None
    c = model.velocities[i]
    cs2 = float(model.cs2)
    sin_terms, const = [], 0.0
    for j, (u0, amp, freq, axis) in enumerate(vel.terms):
        const += c[j] * u0
        if c[j] and amp:
            sin_terms.append((c[j] * amp / cs2, freq, axis))
    if not sin_terms:
        return ("const", None)
    if len(sin_terms) > 1 or abs(const) > 1e-15:
        return None
    scale, freq, axis = sin_terms[0]
    if abs(abs(scale) - 1) > 1e-12 or c[axis] != 0:
        return None
    return ("sin", (int(np.sign(scale)), freq, axis))


def structured_pairs(model: LatticeModel, vel: VelocityField):
    """Per-pair laws when every pair is constant or unit sinusoid; else None."""
    laws = []
    for i, j in model.pairs():
        law = _pair_law(model, vel, i)
        if law is None:
            return None
        laws.append((i, j, law))
    return laws


def _pair_rotation_gates(layout: RegisterLayout, encoding: str, grid: Grid, i: int, j: int,
                         law, n_dense: int) -> list:
    """Grid-controlled rotation moving amplitude between directions i (+c) and j (-c).

    Rotation angle is -sigma*pi*f*x_axis, accumulated bit by bit of the axis register.
    """
    sigma, freq, axis = law
    off, m = grid.axis_offset(axis), grid.axis_qubits[axis]
    L = grid.shape[axis]
    deltas = [-sigma * np.pi * freq * 2**b / L for b in range(m)]
    dq = layout.qubits("direction")
    gates = []
    if encoding == "one_hot":
        for b, delta in enumerate(deltas):
            gates.append(GateOp("rbs", (dq[i], dq[j]), ((off + b, 1),), (2 * delta,),
                                cx_cost=RBS_COST + controlled_rotation_cost(1)))
        return gates
    # dense: Gray-code two-level rotation between code words i and j
    diff = [b for b in range(n_dense) if ((i ^ j) >> b) & 1]
    p = max(diff)
    wj_p = (j >> p) & 1
    conj = [GateOp("x", (dq[q],), ((dq[p], wj_p),), cx_cost=1) for q in diff if q != p]
    others = tuple((dq[q], (i >> q) & 1) for q in range(n_dense) if q != p)
    sign = 1 if ((i >> p) & 1) == 0 else -1
    gates += conj
    for b, delta in enumerate(deltas):
        ctrl = others + ((off + b, 1),)
        gates.append(GateOp("ry", (dq[p],), ctrl, (sign * 2 * delta,), cx_cost=controlled_rotation_cost(len(ctrl))))
    gates += list(reversed(conj))
    return gates


def _householder_table(amps: np.ndarray) -> np.ndarray:
    """Rows v(x) with (I - 2 v v^T)|0> = amps(x)."""
    e0 = np.zeros(amps.shape[1])
    e0[0] = 1
    diff = e0[None, :] - amps
    nrm = np.linalg.norm(diff, axis=1, keepdims=True)
    return np.where(nrm > 1e-15, diff / np.where(nrm > 1e-15, nrm, 1), 0.0)


def _mux_gate(layout: RegisterLayout, encoding: str, k_table: np.ndarray, tag: str) -> GateOp:
    amps = np.sqrt(np.clip(k_table, 0, None))  # (M, sites)
    codes = np.stack([_code_vector(amps[:, s], encoding, layout.direction) for s in range(amps.shape[1])])
    cost = 2**layout.grid * 2**layout.direction  # multiplexor bound, see conventions
    grid_ctrl = tuple((q, 1) for q in layout.qubits("grid"))
    return GateOp("mux", tuple(layout.qubits("direction")), grid_ctrl, (), _householder_table(codes), cost, tag)


def prep_nonuniform_circuit(model: LatticeModel, vel: VelocityField, kfield: KField, encoding: str,
                            layout: RegisterLayout, role: str = "PREP") -> CircuitSpec:
    """PREP (role='PREP') or UNPREP (role='UNPREP', the operator itself, not its adjoint)."""
    if role not in ("PREP", "UNPREP"):
        raise ValueError("role must be PREP or UNPREP")
    grid = kfield.grid
    tag = role.lower()
    invariant = all(np.allclose(shift(kfield.values[i], c), kfield.values[i], atol=1e-14)
                    for i, c in enumerate(model.velocities))
    if role == "UNPREP":
        report = check_stochastic_consistency(kfield, model)
        if not report.passed:
            raise ValueError(f"UNPREP is not unitary: deviation {report.max_deviation:.3e} "
                             f"at sites {report.failing_sites[:5]}")
    laws = structured_pairs(model, vel)
    if laws is not None and (role == "PREP" or invariant):
        base = model.w * (1 + model.c @ np.array([t[0] for t in vel.terms]) / float(model.cs2))
        prep = prep_circuit(base, encoding, layout)
        for i, j, (kind, law) in laws:
            if kind == "sin":
                prep.append(_pair_rotation_gates(layout, encoding, grid, i, j, law, layout.direction))
        prep = CircuitSpec(layout).append(prep.gates, "prep")
        return prep if role == "PREP" else prep.adjoint("unprep")
    flat = kfield.values.reshape(model.M, -1)
    if role == "PREP" or invariant:
        return CircuitSpec(layout).append([_mux_gate(layout, encoding, flat, tag)])
    shifted = np.stack([shift(kfield.values[i], c) for i, c in enumerate(model.velocities)])
    # UNPREP^dagger prepares sqrt(k_i(x - c_i)); the reflection is its own adjoint
    return CircuitSpec(layout).append([_mux_gate(layout, encoding, shifted.reshape(model.M, -1), tag)])
