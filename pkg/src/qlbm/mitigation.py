"""Shot triage, depolarizing/background estimation and observable renormalization.

Noise model: a global depolarizing weight lambda acts on the full n-qubit
outcome distribution; after triage the normalized usable grid distribution
additionally carries a constant floor b per site (``add_background``).
A depolarized outcome lands in the usable grid block with probability
2^(nG-n) only, so lambda is read off the companion's usable share, and b
from its floor sites. Observable-level weights follow from both.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .lattice import Grid
from .qsim import RegisterLayout, apply_depolarizing
from .readout import MomentEstimates, estimate_moments, raw_observables

FLOOR_THRESHOLD = 1e-6
DENOM_EPS = 1e-9
OBSERVABLES = ("mean", "var", "cov")


@dataclass
class ShotTriage:
    total: float
    perpendicular: float
    flagged: float
    usable: float

    @property
    def shares(self) -> dict:
        t = self.total or 1
        return {"perpendicular": self.perpendicular / t, "flagged": self.flagged / t, "usable": self.usable / t}

    def to_json(self) -> str:
        return json.dumps({**asdict(self), "shares": self.shares})


def triage_shots(counts, layout: RegisterLayout, flag_accept: int = 1) -> tuple[np.ndarray, ShotTriage]:
    """Split outcomes into perpendicular / flagged / usable; return usable grid counts.

    Precedence: direction or C^nX ancilla register nonzero -> perpendicular;
    otherwise any flag differing from ``flag_accept`` -> flagged.
    """
    arr = np.asarray(counts)
    if arr.size != 2**layout.n:
        raise ValueError(f"{arr.size} outcomes do not match a {layout.n}-qubit layout")
    v = layout.split(arr)  # (flag, anc, dir, grid)
    accept = (2**layout.flag - 1) if flag_accept else 0
    good = v[:, 0, 0, :]
    total = arr.sum().item()
    inside = good.sum().item()
    usable_grid = good[accept].copy()
    usable = usable_grid.sum().item()
    return usable_grid, ShotTriage(total, total - inside, inside - usable, usable)


@dataclass
class NoiseChannelEstimate:
    """lam_* are per-observable estimates of the depolarizing weight, None if unavailable."""

    lam_mean: float | None
    lam_var: float | None
    lam_cov: float | None
    b: float = 0.0
    lam_share: float | None = None
    weights: dict = field(default_factory=dict)  # grid-level uniform weight per observable

    @property
    def lam(self) -> float:
        """Primary lambda: usable-share estimate, else variance, mean, covariance."""
        for v in (self.lam_share, self.lam_var, self.lam_mean, self.lam_cov):
            if v is not None:
                return v
        raise ValueError("no lambda estimate available")

    def for_observable(self, name: str) -> float:
        v = getattr(self, f"lam_{name}")
        return self.lam if v is None else v

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def uniform_moments(grid: Grid, center) -> MomentEstimates:
    """Moments of the uniform grid distribution in the frame at ``center``."""
    p = np.full(grid.size, 1 / grid.size)
    return MomentEstimates.from_raw(center, *raw_observables(p, grid, center))


def _components(m: MomentEstimates) -> dict:
    d = len(m.raw_d)
    off = [m.raw_dd[i, j] for i in range(d) for j in range(i + 1, d)]
    return {"mean": np.asarray(m.raw_d), "var": np.diag(m.raw_dd).copy(), "cov": np.asarray(off)}


def _fit_weight(ideal: np.ndarray, noisy: np.ndarray, unif: np.ndarray) -> float | None:
    den = ideal - unif
    ok = np.abs(den) > DENOM_EPS
    if not np.any(ok):
        return None
    lam = np.dot(ideal[ok] - noisy[ok], den[ok]) / np.dot(den[ok], den[ok])
    return float(np.clip(lam, 0.0, 1.0))


def estimate_lambda(ideal_obs: MomentEstimates, noisy_obs: MomentEstimates,
                    identity_term: MomentEstimates) -> NoiseChannelEstimate:
    """Per-observable lambda = (O_ideal - O_noisy) / (O_ideal - O_uniform).

    All three estimates must share one moment frame. Components along several
    axes are combined by least squares; a vanishing denominator marks the
    observable unavailable.
    """
    if not (np.allclose(ideal_obs.center, noisy_obs.center) and np.allclose(ideal_obs.center, identity_term.center)):
        raise ValueError("observables were measured in different frames")
    ci, cn, cu = _components(ideal_obs), _components(noisy_obs), _components(identity_term)
    lams = {k: _fit_weight(ci[k], cn[k], cu[k]) for k in OBSERVABLES}
    return NoiseChannelEstimate(lams["mean"], lams["var"], lams["cov"], weights=dict(lams))


def renormalize_observables(noisy_obs: MomentEstimates, weights, identity_term: MomentEstimates) -> MomentEstimates:
    """Invert O_noisy = (1-w) O_ideal + w O_uniform with a weight per observable.

    ``weights`` is a NoiseChannelEstimate (its grid-level ``weights``) or a dict
    name -> weight; a missing weight falls back to the variance one.
    """
    if isinstance(weights, NoiseChannelEstimate):
        weights = weights.weights
    fallback = weights.get("var")
    if fallback is None:
        fallback = next((w for w in weights.values() if w is not None), 0.0)
    w = {k: fallback if weights.get(k) is None else weights[k] for k in OBSERVABLES}
    if any(v >= 1 for v in w.values()):
        raise ValueError("lambda = 1 leaves no signal to recover")
    cn, cu = _components(noisy_obs), _components(identity_term)
    fixed = {k: (cn[k] - w[k] * cu[k]) / (1 - w[k]) for k in OBSERVABLES}
    d = len(noisy_obs.raw_d)
    dd = np.diag(fixed["var"])
    it = iter(fixed["cov"])
    for i in range(d):
        for j in range(i + 1, d):
            dd[i, j] = dd[j, i] = next(it)
    # shot noise is amplified by the same 1/(1-w) as the signal
    stderr = {k: np.asarray(v) / (1 - w[k]) for k, v in noisy_obs.stderr.items()}
    return MomentEstimates.from_raw(noisy_obs.center, fixed["mean"], dd, noisy_obs.shots, stderr)


def add_background(p, b: float) -> np.ndarray:
    """Mix a normalized distribution with a constant floor of height b per site."""
    p = np.asarray(p, dtype=float)
    if b < 0 or b * p.size > 1:
        raise ValueError("background must satisfy 0 <= b <= 1/N")
    return p * (1 - b * p.size) + b


def remove_background(p, b: float) -> np.ndarray:
    """max(p - b, 0), renormalized."""
    if b < 0:
        raise ValueError("background must be non-negative")
    p = np.asarray(p, dtype=float)
    p = p / p.sum()
    out = np.clip(p - b, 0.0, None)
    if out.sum() <= 0:
        raise ValueError(f"background {b:.3e} removes all probability mass")
    return out / out.sum()


def estimate_background(measured, ideal, depolarized_weight: float = 0.0,
                        floor: float = FLOOR_THRESHOLD) -> float:
    """Floor height b from sites whose ideal probability is below ``floor``.

    ``depolarized_weight`` is the uniform weight already present before the
    floor was added; its share of the floor-site value is subtracted.
    """
    q = np.asarray(measured, dtype=float).ravel()
    q = q / q.sum()
    ideal = np.asarray(ideal, dtype=float).ravel()
    ideal = ideal / ideal.sum()
    sites = ideal < floor
    if not np.any(sites):
        raise ValueError("no floor sites below the threshold")
    n = q.size
    w = depolarized_weight
    p_floor = (1 - w) * ideal[sites] + w / n
    # q = p (1 - b n) + b on every site
    b = np.mean((q[sites] - p_floor) / (1 - n * p_floor))
    return float(max(b, 0.0))


def _grid_share(layout: RegisterLayout) -> float:
    return 2.0 ** (layout.grid - layout.n)


def estimate_noise_channel(ideal_full, measured_full, layout: RegisterLayout, grid: Grid,
                           flag_accept: int = 0, floor: float = FLOOR_THRESHOLD) -> NoiseChannelEstimate:
    """Noise channel from the noise-estimation companion.

    ``ideal_full`` is the noiseless outcome distribution over all n qubits,
    ``measured_full`` shot counts or an exact noisy distribution.
    """
    ideal_grid, ideal_tri = triage_shots(ideal_full, layout, flag_accept)
    meas_grid, meas_tri = triage_shots(measured_full, layout, flag_accept)
    F, U = ideal_tri.shares["usable"], meas_tri.shares["usable"]
    s = _grid_share(layout)
    lam = float(np.clip((F - U) / (F - s), 0.0, 1.0))
    w_dep = lam * s / U if U > 0 else 1.0
    b = estimate_background(meas_grid, ideal_grid, w_dep, floor)
    shots = int(meas_tri.total) if np.issubdtype(np.asarray(measured_full).dtype, np.integer) else None
    ideal_m = estimate_moments(ideal_grid / ideal_grid.sum(), grid)
    noisy_m = estimate_moments(meas_grid / meas_grid.sum(), grid, center=ideal_m.center, shots=shots)
    est = estimate_lambda(ideal_m, noisy_m, uniform_moments(grid, ideal_m.center))
    conv = {}
    for k, w in est.weights.items():
        if w is None:
            conv[k] = None
            continue
        # 1 - w = (1 - w_dep)(1 - bN)  ->  w_dep  ->  lambda
        wd = 1 - (1 - w) / (1 - b * grid.size)
        conv[k] = float(np.clip(wd * U / s, 0.0, 1.0))
    return NoiseChannelEstimate(conv["mean"], conv["var"], conv["cov"], b, lam, est.weights)


def target_weight(estimate: NoiseChannelEstimate, target_triage: ShotTriage, layout: RegisterLayout,
                  grid_size: int) -> float:
    """Effective uniform weight in a target's normalized usable distribution."""
    U = target_triage.shares["usable"]
    if U <= 0:
        raise ValueError("target has no usable shots")
    w_dep = min(1.0, estimate.lam * _grid_share(layout) / U)
    return 1 - (1 - w_dep) * (1 - estimate.b * grid_size)


def mitigate_target(grid_data, target_triage: ShotTriage, estimate: NoiseChannelEstimate,
                    layout: RegisterLayout, grid: Grid, center=None) -> tuple[MomentEstimates, np.ndarray]:
    """Renormalized moments and background-free distribution for a target circuit."""
    data = np.asarray(grid_data)
    shots = int(data.sum()) if np.issubdtype(data.dtype, np.integer) else None
    p = data / data.sum()
    noisy = estimate_moments(p, grid, center=center, shots=shots)
    w = target_weight(estimate, target_triage, layout, grid.size)
    unif = uniform_moments(grid, noisy.center)
    moments = renormalize_observables(noisy, {k: w for k in OBSERVABLES}, unif)
    return moments, remove_background(p, estimate.b)


def inject_noise(probabilities, layout: RegisterLayout, lam: float, b: float, flag_accept: int = 1) -> np.ndarray:
    """Distribution-level noise: depolarize all n qubits, then floor the usable block.

    The usable block keeps its total mass; within it the normalized grid
    distribution becomes ``add_background(., b)``.
    """
    p = apply_depolarizing(np.asarray(probabilities, dtype=float), lam, layout.n)
    if b == 0:
        return p
    p = p.copy()
    v = layout.split(p)
    accept = (2**layout.flag - 1) if flag_accept else 0
    block = v[accept, 0, 0, :]
    mass = block.sum()
    if mass > 0:
        v[accept, 0, 0, :] = mass * add_background(block / mass, b)
    return p
