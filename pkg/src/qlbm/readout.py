"""Moment readout, Gaussian reconstruction and fidelity metrics.

Moments live on the torus, so they are taken in a frame centred on the mode
of each axis marginal: displacement d in [-L/2, L/2). The raw linear
observables E[d] and E[d d^T] are kept alongside mean/covariance because the
mitigation step needs quantities that mix linearly with the noise.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .lattice import DensityField, Grid, gaussian_values
from .qsim import QuantumState


@dataclass(frozen=True)
class GaussianParams:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if not np.allclose(cov, cov.T) or np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValueError("covariance is not symmetric positive definite")


@dataclass
class MomentEstimates:
    mean: np.ndarray
    cov: np.ndarray
    center: np.ndarray
    raw_d: np.ndarray  # E[d]
    raw_dd: np.ndarray  # E[d d^T]
    shots: int | None = None
    stderr: dict = field(default_factory=dict)

    @property
    def variance(self) -> np.ndarray:
        return np.diag(self.cov).copy()

    @property
    def corr(self) -> np.ndarray:
        s = np.sqrt(np.clip(self.variance, 1e-300, None))
        return self.cov / np.outer(s, s)

    @classmethod
    def from_raw(cls, center, raw_d, raw_dd, shots=None, stderr=None) -> "MomentEstimates":
        center = np.asarray(center, dtype=float)
        raw_d = np.asarray(raw_d, dtype=float)
        raw_dd = np.asarray(raw_dd, dtype=float)
        cov = raw_dd - np.outer(raw_d, raw_d)
        cov = (cov + cov.T) / 2
        return cls(center + raw_d, cov, center, raw_d, raw_dd, shots, stderr or {})

    def to_json(self) -> str:
        return json.dumps({
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
            "center": self.center.tolist(),
            "raw_d": self.raw_d.tolist(),
            "raw_dd": self.raw_dd.tolist(),
            "shots": self.shots,
            "stderr": {k: np.asarray(v).tolist() for k, v in self.stderr.items()},
        })

    @classmethod
    def from_json(cls, text: str) -> "MomentEstimates":
        d = json.loads(text)
        return cls(np.array(d["mean"]), np.array(d["cov"]), np.array(d["center"]), np.array(d["raw_d"]),
                   np.array(d["raw_dd"]), d["shots"], {k: np.array(v) for k, v in d["stderr"].items()})


def _as_grid_array(data, grid: Grid) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.size != grid.size:
        raise ValueError(f"data has {arr.size} entries, grid has {grid.size} sites")
    return arr.reshape(grid.shape)


def mode_center(p: np.ndarray, grid: Grid) -> np.ndarray:
    """Per-axis argmax of the marginal distribution."""
    p = _as_grid_array(p, grid)
    axes = range(grid.d)
    return np.array([np.argmax(p.sum(axis=tuple(a for a in axes if a != j))) for j in axes], dtype=float)


def displacements(grid: Grid, center) -> np.ndarray:
    """Wrapped displacement from ``center`` per site, shape (d, *grid.shape)."""
    idx = np.meshgrid(*[np.arange(s, dtype=float) for s in grid.shape], indexing="ij")
    return np.stack([(idx[j] - center[j] + grid.shape[j] / 2) % grid.shape[j] - grid.shape[j] / 2
                     for j in range(grid.d)])


def raw_observables(p: np.ndarray, grid: Grid, center) -> tuple[np.ndarray, np.ndarray]:
    """E[d], E[d d^T] of a normalized grid distribution in the frame at ``center``."""
    p = _as_grid_array(p, grid).ravel()
    d = displacements(grid, center).reshape(grid.d, -1)
    return d @ p, (d * p) @ d.T


def estimate_moments(data, grid: Grid, center=None, shots: int | None = None) -> MomentEstimates:
    """First and second moments of a grid distribution.

    Integer ``data`` is treated as shot counts (shots = their sum); float data
    as a probability vector, exact unless ``shots`` is given for the errors.
    """
    arr = np.asarray(data)
    if arr.size == 0 or not np.any(arr):
        raise ValueError("no measurement data")
    if np.any(arr < 0):
        raise ValueError("counts/probabilities must be non-negative")
    if np.issubdtype(arr.dtype, np.integer):
        shots = int(arr.sum())
    p = _as_grid_array(arr, grid)
    p = p / p.sum()
    center = mode_center(p, grid) if center is None else np.asarray(center, dtype=float)
    e_d, e_dd = raw_observables(p, grid, center)
    out = MomentEstimates.from_raw(center, e_d, e_dd, shots)
    if shots:
        dev = displacements(grid, center).reshape(grid.d, -1) - e_d[:, None]
        pf = p.ravel()
        var_d = dev**2 @ pf
        m4 = dev**4 @ pf
        cross = (dev * pf) @ dev.T
        cross_sq = (dev**2 * pf) @ (dev**2).T
        out.stderr = {
            "mean": np.sqrt(var_d / shots),
            "var": np.sqrt(np.clip(m4 - var_d**2, 0, None) / shots),
            "cov": np.sqrt(np.clip(cross_sq - cross**2, 0, None) / shots),
        }
    return out


def reconstruct_gaussian(moments: MomentEstimates, grid: Grid) -> DensityField:
    """Amplitude Gaussian whose squared modulus has the measured mean and covariance."""
    amp_cov = 2 * np.asarray(moments.cov, dtype=float)
    GaussianParams(moments.mean, amp_cov)
    vals = gaussian_values(grid, moments.mean, amp_cov)
    return DensityField(vals / np.linalg.norm(vals), grid)


def _vector(x) -> np.ndarray:
    if isinstance(x, DensityField):
        return np.asarray(x.values, dtype=complex).ravel()
    if isinstance(x, QuantumState):
        return x.amplitudes
    return np.asarray(x, dtype=complex).ravel()


def state_fidelity(a, b) -> float:
    """|<a|b>| after normalizing both."""
    va, vb = _vector(a), _vector(b)
    if va.shape != vb.shape:
        raise ValueError("fidelity arguments differ in shape")
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0 or nb == 0:
        raise ValueError("fidelity of a zero-norm state")
    return float(min(1.0, abs(np.vdot(va, vb)) / (na * nb)))


def qst_estimate(counts, grid: Grid) -> DensityField:
    """Tomography baseline assuming real non-negative amplitudes: sqrt of frequencies."""
    arr = _as_grid_array(counts, grid)
    if arr.sum() <= 0:
        raise ValueError("no measurement data")
    return DensityField(np.sqrt(arr / arr.sum()), grid)
