from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlbm.qsim import (
    GateOp,
    PostSelectionError,
    QuantumState,
    RegisterLayout,
    apply_circuit,
    apply_depolarizing,
    apply_gate,
    counts_from_dict,
    counts_to_dict,
    gate_matrix,
    init_state,
    load_exact_amplitudes,
    post_select,
    sample_shots,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
P0 = np.diag([1, 0]).astype(complex)
P1 = np.diag([0, 1]).astype(complex)


def _embed(n, ops: dict) -> np.ndarray:
    """Kronecker product with qubit n-1 leftmost (little-endian basis index)."""
    out = np.array([[1.0 + 0j]])
    for q in reversed(range(n)):
        out = np.kron(out, ops.get(q, np.eye(2)))
    return out


def _dense_matrix(gate: GateOp, n: int) -> np.ndarray:
    """Independent oracle: sum over control patterns of projectors times target action."""
    full = np.zeros((2**n, 2**n), dtype=complex)
    ctrl = dict(gate.controls)
    m = X if gate.kind == "x" else gate_matrix(gate)
    # active branch
    if len(gate.targets) == 1:
        ops = {q: (P1 if p else P0) for q, p in ctrl.items()}
        ops[gate.targets[0]] = m
        full += _embed(n, ops)
    else:
        qa, qb = gate.targets
        for r in range(4):
            for c in range(4):
                if m[r, c] == 0:
                    continue
                ops = {q: (P1 if p else P0) for q, p in ctrl.items()}
                ops[qa] = np.outer(np.eye(2)[r >> 1], np.eye(2)[c >> 1])
                ops[qb] = np.outer(np.eye(2)[r & 1], np.eye(2)[c & 1])
                full += m[r, c] * _embed(n, ops)
    # inactive branches: identity on every control pattern that is not the active one
    idle = np.eye(2**n, dtype=complex)
    if ctrl:
        idle = idle - _embed(n, {q: (P1 if p else P0) for q, p in ctrl.items()})
        full += idle
    return full


def _random_state(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return v / np.linalg.norm(v)


def _random_u2(seed):
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    return q * (np.diag(r) / abs(np.diag(r)))


GATES = [
    GateOp("x", (0,)),
    GateOp("x", (2,), ((0, 1), (3, 0))),
    GateOp("h", (1,)),
    GateOp("ry", (3,), ((1, 1),), (0.7,)),
    GateOp("rbs", (0, 2), (), (1.1,)),
    GateOp("rbs", (3, 1), ((2, 0),), (-0.4,)),
    GateOp("u2", (2, 0), (), (), _random_u2(1)),
    GateOp("u2", (1, 3), ((0, 1),), (), _random_u2(2)),
]


@pytest.mark.parametrize("gate", GATES, ids=lambda g: g.name)
def test_gate_kernel_matches_dense_matrix(gate):
    n = 4
    layout = RegisterLayout(n)
    psi = _random_state(n, 5)
    got = psi.copy()
    apply_gate(got.reshape((2,) * n), gate, layout)
    assert np.allclose(got, _dense_matrix(gate, n) @ psi, atol=1e-12)


def test_little_endian_x():
    layout = RegisterLayout(3)
    st_ = apply_circuit(init_state(layout), SimpleNamespace(gates=[GateOp("x", (1,))]))
    assert np.flatnonzero(st_.amplitudes) == [2]


def test_rbs_action():
    # |1_a 0_b> -> cos|10> + sin|01>
    layout = RegisterLayout(2)
    s = init_state(layout)
    s.amplitudes[:] = 0
    s.amplitudes[2] = 1  # qubit 1 set
    out = apply_circuit(s, SimpleNamespace(gates=[GateOp("rbs", (1, 0), (), (0.8,))]))
    assert out.amplitudes[2] == pytest.approx(np.cos(0.4))
    assert out.amplitudes[1] == pytest.approx(np.sin(0.4))


@pytest.mark.parametrize("gate", GATES, ids=lambda g: g.name)
def test_adjoint_inverts(gate):
    n = 4
    layout = RegisterLayout(n)
    psi = _random_state(n, 9)
    work = psi.copy()
    apply_gate(work.reshape((2,) * n), gate, layout)
    apply_gate(work.reshape((2,) * n), gate.adjoint(), layout)
    assert np.allclose(work, psi, atol=1e-12)


def test_gate_validation():
    with pytest.raises(ValueError):
        GateOp("cz", (0,))
    with pytest.raises(ValueError):
        GateOp("x", (0,), ((0, 1),))
    with pytest.raises(ValueError):
        GateOp("u2", (0, 1), (), (), np.ones((4, 4)))
    layout = RegisterLayout(2)
    with pytest.raises(ValueError):
        apply_gate(np.zeros((2, 2), dtype=complex), GateOp("x", (5,)), layout)


def test_layout_registers_and_cap():
    lay = RegisterLayout(8, 5, 2, 4)
    assert lay.n == 19
    assert lay.qubits("direction") == [8, 9, 10, 11, 12]
    assert lay.qubits("flag") == [15, 16, 17, 18]
    all_q = sum((lay.qubits(r) for r in ("grid", "direction", "ancilla", "flag")), [])
    assert sorted(all_q) == list(range(19))
    with pytest.raises(ValueError):
        RegisterLayout(25, 6)
    with pytest.raises(KeyError):
        lay.qubits("bogus")


def test_load_and_post_select():
    lay = RegisterLayout(2, 1)
    vals = np.array([1.0, 2.0, 2.0, 4.0])
    s = load_exact_amplitudes(init_state(lay), vals)
    assert np.allclose(s.grid_amplitudes(), vals / 5)
    h = apply_circuit(s, SimpleNamespace(gates=[GateOp("h", (2,))]))
    out, p = post_select(h, "direction", 0)
    assert p == pytest.approx(0.5)
    assert np.allclose(out.grid_amplitudes(), vals / 5)
    assert out.records[-1].probability == pytest.approx(0.5)
    with pytest.raises(PostSelectionError):
        post_select(s, "direction", 1)
    with pytest.raises(ValueError):
        load_exact_amplitudes(init_state(lay), np.ones(3))


def test_sampling_deterministic_and_round_trip():
    p = np.array([0.1, 0.2, 0.3, 0.4])
    a = sample_shots(p, 1000, 7)
    assert a.sum() == 1000
    assert np.array_equal(a, sample_shots(p, 1000, 7))
    d = counts_to_dict(a, 2)
    assert all(len(k) == 2 for k in d)
    assert np.array_equal(counts_from_dict(d, 2), a)
    with pytest.raises(ValueError):
        sample_shots(p, 0, 1)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.integers(1, 6), st.integers(0, 1000))
def test_depolarizing_mixture(lam, n, seed):
    p = np.random.default_rng(seed).random(2**n)
    p /= p.sum()
    q = apply_depolarizing(p, lam, n)
    assert q.sum() == pytest.approx(1.0)
    assert np.allclose(q, (1 - lam) * p + lam / 2**n)


def test_depolarizing_range():
    with pytest.raises(ValueError):
        apply_depolarizing(np.ones(2) / 2, 1.5, 1)


def test_norm_preserved_over_random_circuit():
    lay = RegisterLayout(5)
    rng = np.random.default_rng(3)
    gates = []
    for _ in range(40):
        a, b = rng.choice(5, 2, replace=False)
        gates.append(GateOp("ry", (int(a),), ((int(b), int(rng.integers(2))),), (float(rng.normal()),)))
        gates.append(GateOp("rbs", (int(a), int(b)), (), (float(rng.normal()),)))
    s = QuantumState(_random_state(5, 4), lay)
    out = apply_circuit(s, SimpleNamespace(gates=gates))
    assert out.norm() == pytest.approx(1.0, abs=1e-12)
