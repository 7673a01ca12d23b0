"""Matrix-product-state amplitude loading.

Sites run from the most significant grid qubit (site 0 = qubit n-1) to the
least significant, matching C-order flattening of the field array.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..lattice import DensityField
from ..qsim import GateOp, RegisterLayout, apply_circuit, init_state
from .base import CircuitSpec

SO4_CX_COST = 2  # any real orthogonal 4x4 with det +1 needs two CX


@dataclass
class MPSApprox:
    tensors: list  # right-canonical, shape (chi_l, 2, chi_r)
    chi: int
    target: np.ndarray = field(repr=False)
    fidelity_to_target: float = 1.0
    layers: list = field(default_factory=list)  # filled by mps_loader_circuit

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    def to_vector(self) -> np.ndarray:
        out = self.tensors[0].reshape(2, -1)
        for t in self.tensors[1:]:
            out = (out @ t.reshape(t.shape[0], -1)).reshape(-1, t.shape[2])
        return out.ravel()


def _right_canonical(psi: np.ndarray, n: int, chi: int) -> list:
    tensors = []
    rest = psi.reshape(-1, 1)
    for _ in range(n - 1):
        chi_r = rest.shape[1]
        mat = rest.reshape(-1, 2 * chi_r)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        keep = max(1, min(chi, int(np.sum(s > 1e-14 * s[0]))))
        tensors.append(vh[:keep].reshape(keep, 2, chi_r))
        rest = u[:, :keep] * s[:keep]
    first = rest.reshape(1, 2, -1)
    tensors.append(first / np.linalg.norm(first))
    return tensors[::-1]


def _fit_vector(psi: np.ndarray, chi: int) -> list:
    n = int(round(np.log2(psi.size)))
    if 2**n != psi.size:
        raise ValueError("site count must be a power of two")
    return _right_canonical(psi, n, chi)


def mps_fit(field: DensityField | np.ndarray, chi: int) -> MPSApprox:
    """Sequential SVD with bond truncation to ``chi``; fidelity is |<target|mps>|."""
    if chi < 1:
        raise ValueError("chi must be >= 1")
    vals = np.asarray(field.values if isinstance(field, DensityField) else field, dtype=float).ravel()
    nrm = np.linalg.norm(vals)
    if nrm == 0:
        raise ValueError("cannot fit a zero-norm field")
    target = vals / nrm
    tensors = _fit_vector(target, chi)
    approx = MPSApprox(tensors, chi, target)
    approx.fidelity_to_target = float(abs(np.dot(target, approx.to_vector())))
    return approx


def _complete(cols: np.ndarray, fixed: list[int]) -> np.ndarray:
    """4x4 orthogonal with det +1 whose columns ``fixed`` equal ``cols[:, fixed]``."""
    given = cols[:, fixed]
    q, _ = np.linalg.qr(np.hstack([given, np.eye(4)]))
    null = q[:, len(fixed):4]
    # orthonormalize the complement against the given columns explicitly
    null -= given @ (given.T @ null)
    null, _ = np.linalg.qr(null)
    out = np.zeros((4, 4))
    free = [c for c in range(4) if c not in fixed]
    out[:, fixed] = given
    out[:, free] = null[:, : len(free)]
    if np.linalg.det(out) < 0:
        out[:, free[-1]] *= -1
    return out


def _layer_unitaries(tensors: list) -> list[np.ndarray]:
    """Staircase of n-1 two-qubit unitaries preparing a bond-2 right-canonical MPS.

    Gate s acts on (qubit of site s, qubit of site s+1) with basis index
    2*bit(site s) + bit(site s+1): it takes the incoming bond value on site s
    with site s+1 in |0> to sum_{i,r} B_s[l, i, r] |i>|r>.
    """
    n = len(tensors)
    mats = []
    for s in range(n - 1):
        b = tensors[s]
        chi_l, _, chi_r = b.shape
        if chi_l > 2 or chi_r > 2:
            raise ValueError("staircase layers need bond dimension <= 2")
        cols = np.zeros((4, 4))
        for l in range(chi_l):
            blk = np.zeros((2, 2))
            blk[:, :chi_r] = b[l]
            cols[:, 2 * l] = blk.ravel()
        mats.append(_complete(cols, [2 * l for l in range(chi_l)]))
    last = tensors[-1].reshape(tensors[-1].shape[0], 2)
    v = np.zeros((2, 2))
    v[:, : last.shape[0]] = last.T
    if last.shape[0] == 1:
        v[:, 1] = [-v[1, 0], v[0, 0]]
    if np.linalg.det(v) < 0 and last.shape[0] == 1:
        v[:, 1] *= -1
    if n == 1:
        return [v]
    mats[-1] = np.kron(np.eye(2), v) @ mats[-1]
    return mats


def _layer_gates(mats: list, n: int) -> list[GateOp]:
    if n == 1:
        raise ValueError("a single grid qubit has no two-qubit layer")
    return [GateOp("u2", (n - 1 - s, n - 2 - s), (), (), m.astype(complex), SO4_CX_COST, "load")
            for s, m in enumerate(mats)]


def mps_loader_circuit(mps: MPSApprox, n_layers: int, layout: RegisterLayout | None = None) -> CircuitSpec:
    """``n_layers`` staircases; layer k fits the residual L_{k-1}^dag ... L_1^dag |target>.

    The circuit applies the last-extracted layer first. Sets ``mps.layers`` and
    ``mps.fidelity_to_target`` to the loader's actual fidelity.
    """
    if n_layers < 1:
        raise ValueError("n_layers must be >= 1")
    n = mps.n_sites
    grid_layout = RegisterLayout(n)
    layers, residual = [], mps.target.astype(complex)
    for _ in range(n_layers):
        gates = _layer_gates(_layer_unitaries(_fit_vector(residual.real, 2)), n)
        layers.append(gates)
        undo = CircuitSpec(grid_layout, [g.adjoint() for g in reversed(gates)])
        st = init_state(grid_layout)
        st.amplitudes[:] = residual
        residual = apply_circuit(st, undo).amplitudes
    circ = CircuitSpec(layout or grid_layout)
    for gates in reversed(layers):
        circ.append(gates)
    out = apply_circuit(init_state(grid_layout), CircuitSpec(grid_layout, list(circ.gates)))
    mps.layers = layers
    mps.fidelity_to_target = float(abs(np.vdot(mps.target, out.amplitudes)))
    return circ
