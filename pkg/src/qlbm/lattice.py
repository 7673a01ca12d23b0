"""Classical lattice Boltzmann reference for linear advection-diffusion.

With relaxation fixed to one the update collapses to a weighted stencil,

    phi'(x) = sum_i k_i(x - c_i) phi(x - c_i),   k_i = w_i (1 + c_i.u / cs2),

which is both the classical solver and the oracle for the quantum pipeline.
Boundaries are periodic; dt = 1 lattice unit.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class LatticeModel:
    name: str
    velocities: tuple  # tuple of int tuples, rest direction first
    weights: tuple  # Fractions
    cs2: Fraction

    @property
    def d(self) -> int:
        return len(self.velocities[0])

    @property
    def M(self) -> int:
        return len(self.velocities)

    @property
    def c(self) -> np.ndarray:
        return np.array(self.velocities, dtype=int)

    @property
    def w(self) -> np.ndarray:
        return np.array([float(x) for x in self.weights])

    @property
    def n_dense(self) -> int:
        return max(1, int(np.ceil(np.log2(self.M))))

    def opposite(self, i: int) -> int:
        target = tuple(-v for v in self.velocities[i])
        return self.velocities.index(target)

    def pairs(self) -> list[tuple[int, int]]:
        """(+c, -c) index pairs, in listing order."""
        out, seen = [], set()
        for i in range(1, self.M):
            if i in seen:
                continue
            j = self.opposite(i)
            out.append((i, j))
            seen.update((i, j))
        return out


def _shell_velocities(d: int, max_norm2: int) -> list[tuple]:
    by_norm: dict[int, list] = {}
    for v in itertools.product((-1, 0, 1), repeat=d):
        n2 = sum(x * x for x in v)
        if 0 < n2 <= max_norm2:
            by_norm.setdefault(n2, []).append(v)
    out = [tuple([0] * d)]
    for n2 in sorted(by_norm):
        # positive-leading representative first, then its opposite
        reps = [v for v in by_norm[n2] if next(x for x in v if x) > 0]
        for v in sorted(reps, key=lambda v: [-abs(x) for x in v] + [-x for x in v]):
            out.append(v)
            out.append(tuple(-x for x in v))
    return out


_WEIGHTS = {
    "D2Q5": (2, 1, [Fraction(1, 3), Fraction(1, 6)]),
    "D2Q9": (2, 2, [Fraction(4, 9), Fraction(1, 9), Fraction(1, 36)]),
    "D3Q7": (3, 1, [Fraction(1, 4), Fraction(1, 8)]),
    "D3Q19": (3, 2, [Fraction(1, 3), Fraction(1, 18), Fraction(1, 36)]),
    "D3Q27": (3, 3, [Fraction(8, 27), Fraction(2, 27), Fraction(1, 54), Fraction(1, 216)]),
}


def make_model(name: str) -> LatticeModel:
    """Build a DdQq velocity set. Weights per shell; cs2 = 1/3 for all models."""
    key = name.upper()
    if key not in _WEIGHTS:
        raise ValueError(f"unsupported lattice model {name!r}; choose from {sorted(_WEIGHTS)}")
    d, shells, shell_w = _WEIGHTS[key]
    vel = _shell_velocities(d, shells)
    weights = tuple(shell_w[sum(x * x for x in v)] for v in vel)
    model = LatticeModel(key, tuple(vel), weights, Fraction(1, 3))
    assert sum(model.weights) == 1
    return model


@dataclass(frozen=True)
class Grid:
    shape: tuple

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        for s in shape:
            if s < 2 or s & (s - 1):
                raise ValueError(f"grid side {s} is not a power of two >= 2")
        object.__setattr__(self, "shape", shape)

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def axis_qubits(self) -> tuple:
        return tuple(int(s).bit_length() - 1 for s in self.shape)

    @property
    def n_qubits(self) -> int:
        return sum(self.axis_qubits)

    def axis_offset(self, axis: int) -> int:
        """Lowest grid-qubit index of an axis register (last axis is least significant)."""
        return sum(self.axis_qubits[axis + 1:])

    def coords(self) -> list[np.ndarray]:
        """Unit-interval coordinates x_j = index_j / L_j, broadcast to the grid."""
        return list(np.meshgrid(*[np.arange(s) / s for s in self.shape], indexing="ij"))


@dataclass
class DensityField:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if np.any(self.values < -1e-10):
            raise ValueError("density field has negative entries")
        if not np.linalg.norm(self.values) > 0:
            raise ValueError("density field has zero norm")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def normalized(self) -> np.ndarray:
        return self.values.ravel() / self.norm


@dataclass
class VelocityField:
    """Velocity u(x). ``terms`` holds, per component, (const, amp, freq, axis) for
    u_j = const + amp * sin(2 pi freq x_axis); ``table`` overrides for custom fields."""

    kind: str
    terms: tuple = ()
    table: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def uniform(cls, u) -> "VelocityField":
        return cls("uniform", tuple((float(v), 0.0, 0, 0) for v in u))

    @classmethod
    def swirl2d(cls) -> "VelocityField":
        return cls("swirl2d", ((0.0, -1 / 3, 1, 1), (0.0, 1 / 3, 1, 0)))

    @classmethod
    def swirl3d(cls) -> "VelocityField":
        return cls("swirl3d", ((0.0, -1 / 3, 1, 2), (1 / 3, 0.0, 0, 0), (0.0, 1 / 3, 1, 0)))

    @classmethod
    def custom(cls, table) -> "VelocityField":
        return cls("custom", (), np.asarray(table, dtype=float))

    @property
    def is_uniform(self) -> bool:
        return self.kind == "uniform"

    def values(self, grid: Grid) -> np.ndarray:
        if self.table is not None:
            if self.table.shape != (grid.d, *grid.shape):
                raise ValueError(f"velocity table shape {self.table.shape} does not match grid")
            return self.table
        if len(self.terms) != grid.d:
            raise ValueError("velocity dimension does not match grid")
        xs = grid.coords()
        out = np.empty((grid.d, *grid.shape))
        for j, (const, amp, freq, axis) in enumerate(self.terms):
            out[j] = const + amp * np.sin(2 * np.pi * freq * xs[axis])
        return out


@dataclass
class KField:
    values: np.ndarray  # (M, *grid.shape)
    grid: Grid

    def at(self, flat_index: int) -> np.ndarray:
        return self.values.reshape(self.values.shape[0], -1)[:, flat_index]

    @property
    def is_uniform(self) -> bool:
        flat = self.values.reshape(self.values.shape[0], -1)
        return bool(np.all(np.abs(flat - flat[:, :1]) < 1e-14))


def compute_k_field(model: LatticeModel, vel: VelocityField, grid: Grid) -> KField:
    if model.d != grid.d:
        raise ValueError("model and grid dimensions differ")
    u = vel.values(grid)
    cu = np.tensordot(model.c.astype(float), u, axes=(1, 0))  # (M, *shape)
    k = model.w.reshape((-1,) + (1,) * grid.d) * (1 + cu / float(model.cs2))
    bad = k < -1e-12
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        raise ValueError(
            f"negative k for direction {model.velocities[idx[0]]} at site {tuple(idx[1:])}: "
            "velocity too large for this lattice"
        )
    return KField(np.clip(k, 0.0, None), grid)


def shift(arr: np.ndarray, c) -> np.ndarray:
    """out[x] = arr[x - c] with periodic wraparound."""
    return np.roll(arr, shift=tuple(int(v) for v in c), axis=tuple(range(len(c))))


def classical_step(field: DensityField, kfield: KField, model: LatticeModel) -> DensityField:
    if kfield.values.shape != (model.M, *field.grid.shape):
        raise ValueError("k-field shape does not match field and model")
    out = np.zeros(field.grid.shape)
    for i, c in enumerate(model.velocities):
        out += shift(kfield.values[i] * field.values, c)
    return DensityField(out, field.grid)


def evolve(field: DensityField, kfield: KField, model: LatticeModel, steps: int) -> list[DensityField]:
    out = [field]
    for _ in range(steps):
        out.append(classical_step(out[-1], kfield, model))
    return out


def gaussian_values(grid: Grid, mean, cov) -> np.ndarray:
    """Gaussian in lattice units, evaluated with minimum-image periodic displacements."""
    mean = np.asarray(mean, dtype=float)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (grid.d, grid.d) or mean.shape != (grid.d,):
        raise ValueError("gaussian parameters do not match grid dimension")
    if not np.allclose(cov, cov.T) or np.any(np.linalg.eigvalsh(cov) <= 0):
        raise ValueError("covariance is not symmetric positive definite")
    idx = np.meshgrid(*[np.arange(s, dtype=float) for s in grid.shape], indexing="ij")
    L = np.array(grid.shape, dtype=float)
    disp = np.stack([(idx[j] - mean[j] + L[j] / 2) % L[j] - L[j] / 2 for j in range(grid.d)])
    prec = np.linalg.inv(cov)
    q = np.einsum("i...,ij,j...->...", disp, prec, disp)
    return np.exp(-0.5 * q)


def initial_field(kind: str, grid: Grid, mean=None, cov=None) -> DensityField:
    x = grid.coords()
    if kind == "gaussian":
        if mean is None:
            mean = [(s - 1) / 2 for s in grid.shape]
        if cov is None:
            cov = np.eye(grid.d) * (min(grid.shape) / 8) ** 2
        elif np.isscalar(cov):
            cov = np.eye(grid.d) * float(cov)
        return DensityField(gaussian_values(grid, mean, cov), grid)
    if kind == "sin2d":
        if grid.d != 2:
            raise ValueError("sin2d needs a 2D grid")
        return DensityField(np.sin(2 * np.pi * x[0]) * np.sin(4 * np.pi * x[1]) + 1, grid)
    if kind == "sin3d":
        if grid.d != 3:
            raise ValueError("sin3d needs a 3D grid")
        vals = np.sin(2 * np.pi * x[0]) * np.sin(2 * np.pi * x[1]) * np.sin(2 * np.pi * x[2]) + 1
        return DensityField(vals, grid)
    raise ValueError(f"unknown initial condition {kind!r}")


@dataclass
class ConsistencyReport:
    max_deviation: float
    passed: bool
    failing_sites: list


def check_stochastic_consistency(kfield: KField, model: LatticeModel, tol: float = 1e-12) -> ConsistencyReport:
    """Max over x of |sum_i k_i(x - c_i) - 1|; UNPREP is unitary only when this vanishes."""
    total = np.zeros(kfield.grid.shape)
    for i, c in enumerate(model.velocities):
        total += shift(kfield.values[i], c)
    dev = np.abs(total - 1.0)
    failing = [tuple(int(v) for v in s) for s in np.argwhere(dev > tol)]
    return ConsistencyReport(float(dev.max()), not failing, failing)


def write_field_csv(field: DensityField, path) -> None:
    lines = ["# dims=" + ",".join(str(s) for s in field.grid.shape)]
    lines += [f"{v:.17g}" for v in field.values.ravel()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_field_csv(path) -> DensityField:
    lines = Path(path).read_text().split()
    if not lines or not lines[0].startswith("#"):
        raise ValueError("missing dims header")
    header = " ".join(lines[:2]) if lines[0] == "#" else lines[0]
    dims = tuple(int(s) for s in header.split("dims=")[1].split(","))
    start = 2 if lines[0] == "#" else 1
    vals = np.array([float(v) for v in lines[start:]])
    grid = Grid(dims)
    return DensityField(vals.reshape(dims), grid)
