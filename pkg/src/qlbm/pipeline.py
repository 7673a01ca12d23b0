"""Experiment orchestration: per-step readout and single-circuit runs."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .circuits import (
    CircuitSpec,
    make_layout,
    mps_fit,
    mps_loader_circuit,
    noise_estimation_circuit,
    prep_nonuniform_circuit,
    resource_report,
)
from .circuits.resources import write_table_csv
from .circuits.streaming import direction_streaming, flag_check_gates
from .lattice import (
    DensityField,
    Grid,
    LatticeModel,
    VelocityField,
    compute_k_field,
    evolve,
    initial_field,
    make_model,
    write_field_csv,
)
from .mitigation import ShotTriage, estimate_noise_channel, inject_noise, mitigate_target, triage_shots
from .qsim import (
    PostSelectionError,
    QuantumState,
    RegisterLayout,
    apply_circuit,
    init_state,
    load_exact_amplitudes,
    post_select,
    sample_shots,
)
from .readout import estimate_moments, reconstruct_gaussian, state_fidelity

MAX_SIDE = {2: 64, 3: 8}
MODES = ("per_step", "single_circuit")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    model: str = "D2Q5"
    grid: tuple = (16, 16)
    field: str = "uniform:0.125,0.125"
    init: str = "gaussian"
    steps: int = 1
    mode: str = "per_step"
    encoding: str = "one_hot"
    loader: str = "exact"  # or "mps:chi,layers"
    shots: int = 10_000  # 0 = exact distributions
    noise_lambda: float = 0.0
    noise_background: float = 0.0
    flags: int | None = None  # default: 4 checks for one-hot per-step runs
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        self.grid = tuple(int(s) for s in self.grid)
        self.mode = self.mode.replace("-", "_")
        self.encoding = self.encoding.replace("-", "_")

    # parsed views -------------------------------------------------------
    @property
    def lattice(self) -> LatticeModel:
        return make_model(self.model)

    @property
    def grid_obj(self) -> Grid:
        return Grid(self.grid)

    @property
    def velocity(self) -> VelocityField:
        kind, _, args = self.field.partition(":")
        if kind == "uniform":
            u = [float(v) for v in args.split(",")] if args else [0.0] * len(self.grid)
            return VelocityField.uniform(u)
        if kind in ("swirl2d", "swirl3d"):
            return getattr(VelocityField, kind)()
        raise ConfigError(f"unknown velocity field {self.field!r}")

    @property
    def loader_params(self) -> tuple | None:
        if self.loader == "exact":
            return None
        kind, _, args = self.loader.partition(":")
        if kind != "mps":
            raise ConfigError(f"unknown loader {self.loader!r}")
        chi, layers = (int(v) for v in (args or "2,2").split(","))
        return chi, layers

    @property
    def n_flags(self) -> int:
        if self.flags is not None:
            return self.flags
        return 4 if self.encoding == "one_hot" and self.mode == "per_step" else 0

    def initial(self) -> DensityField:
        kind, _, args = self.init.partition(":")
        grid = self.grid_obj
        if kind == "gaussian":
            if not args:
                return initial_field("gaussian", grid)
            vals = [float(v) for v in args.split(",")]
            if len(vals) != grid.d + 1:
                raise ConfigError("gaussian init takes one mean per axis and a width")
            return initial_field("gaussian", grid, mean=vals[:-1], cov=vals[-1] ** 2)
        return initial_field(kind, grid)

    def validate(self) -> "ExperimentConfig":
        try:
            model, grid = self.lattice, self.grid_obj
            vel = self.velocity
            self.loader_params
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if model.d != grid.d:
            raise ConfigError(f"{self.model} needs a {model.d}D grid")
        if grid.d not in MAX_SIDE or max(grid.shape) > MAX_SIDE[grid.d]:
            raise ConfigError(f"statevector runs are capped at {MAX_SIDE.get(grid.d, 0)} sites per side")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.encoding not in ("dense", "one_hot"):
            raise ConfigError(f"unknown encoding {self.encoding!r}")
        if self.mode == "per_step" and not self.init.startswith("gaussian"):
            raise ConfigError("per-step readout needs a Gaussian initial condition")
        if self.n_flags and self.encoding != "one_hot":
            raise ConfigError("flag checks need the one-hot encoding")
        if not 0 <= self.n_flags <= model.M:
            raise ConfigError(f"flag checks must be between 0 and {model.M}")
        if self.mode == "single_circuit" and self.n_flags:
            raise ConfigError("single-circuit mode runs without flag checks")
        if self.steps < 0 or self.shots < 0:
            raise ConfigError("steps and shots must be non-negative")
        if not 0 <= self.noise_lambda < 1 or self.noise_background < 0:
            raise ConfigError("noise lambda must be in [0, 1) and background >= 0")
        if self.noise_background * grid.size > 1:
            raise ConfigError("background floor exceeds 1/N")
        if self.mode == "single_circuit" and (self.noise_lambda or self.noise_background):
            raise ConfigError("noise injection is defined for per-step runs")
        try:
            compute_k_field(model, vel, grid)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        """key=value lines; keys mirror the CLI flags (dashes or underscores)."""
        values: dict = {}
        with open(path) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, val = line.partition("=")
                if not sep:
                    raise ConfigError(f"malformed config line {line!r}")
                values[key.strip().replace("-", "_")] = val.strip()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_strings(values)

    @classmethod
    def from_strings(cls, values: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        conv = {}
        for k, v in values.items():
            if not isinstance(v, str):
                conv[k] = v
            elif k == "grid":
                conv[k] = tuple(int(s) for s in v.lower().replace("x", ",").split(","))
            elif k in ("steps", "shots", "seed", "flags"):
                conv[k] = int(v)
            elif k in ("noise_lambda", "noise_background"):
                conv[k] = float(v)
            else:
                conv[k] = v
        try:
            return cls(**conv)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def _flag_slots(model: LatticeModel, n_flags: int) -> dict:
    """Which streaming direction each flag check follows (0 = right after PREP)."""
    after = list(range(1, model.M))[:n_flags]
    if n_flags == model.M:
        after = [0] + after
    return {d: k for k, d in enumerate(after)}


def build_step(config: ExperimentConfig, loader_field: DensityField | None = None,
               layout: RegisterLayout | None = None) -> CircuitSpec:
    """PREP, streaming with interleaved flag checks, UNPREP, then |0>_D post-selection.

    An MPS loader for ``loader_field`` is prepended when the config asks for one.
    """
    model, grid = config.lattice, config.grid_obj
    enc = config.encoding
    layout = layout or make_layout(model, grid, enc, flags=config.n_flags)
    kf = compute_k_field(model, config.velocity, grid)
    circ = CircuitSpec(layout)
    lp = config.loader_params
    if loader_field is not None and lp is not None:
        circ.extend(mps_loader_circuit(mps_fit(loader_field, lp[0]), lp[1], layout))
    circ.extend(prep_nonuniform_circuit(model, config.velocity, kf, enc, layout, "PREP"))
    slots = _flag_slots(model, config.n_flags)
    if 0 in slots:
        circ.append(flag_check_gates(layout, slots[0], enc))
    for i in range(1, model.M):
        circ.append(direction_streaming(model, grid, layout, enc, i))
        if i in slots:
            circ.append(flag_check_gates(layout, slots[i], enc))
    circ.extend(prep_nonuniform_circuit(model, config.velocity, kf, enc, layout, "UNPREP"))
    circ.add_marker("direction", 0)
    return circ


@dataclass
class RunArtifacts:
    config: ExperimentConfig
    fields: list = field(default_factory=list)  # DensityField per t = 0..T
    oracle: list = field(default_factory=list)
    moments: list = field(default_factory=list)  # MomentEstimates per t (per-step mode)
    fidelities: list = field(default_factory=list)  # per t, against the oracle
    success_probabilities: list = field(default_factory=list)  # per step
    triage: list = field(default_factory=list)
    noise: list = field(default_factory=list)
    step_cx: int = 0
    step_cx_by_tag: dict = field(default_factory=dict)
    qubits: int = 0
    final_counts: dict | None = None

    @property
    def success_product(self) -> float:
        return float(np.prod(self.success_probabilities)) if self.success_probabilities else 1.0

    @property
    def norm_ratio(self) -> float:
        """||Phi_T||^2 / ||Phi_0||^2 from the classical oracle."""
        return float(self.oracle[-1].norm**2 / self.oracle[0].norm**2)

    def legacy_success(self, steps: int | None = None) -> float:
        """Success probability of the pre-LCU scheme: the norm ratio times 2^(-2 T n_d)."""
        t = len(self.success_probabilities) if steps is None else steps
        n_d = self.config.lattice.n_dense
        ratio = float(self.oracle[t].norm**2 / self.oracle[0].norm**2)
        return ratio / 2.0 ** (2 * t * n_d)


def _oracle(config: ExperimentConfig, start: DensityField) -> list:
    model, grid = config.lattice, config.grid_obj
    return evolve(start, compute_k_field(model, config.velocity, grid), model, config.steps)


def _load(layout: RegisterLayout, field_: DensityField, use_mps: bool) -> QuantumState:
    state = init_state(layout)
    return state if use_mps else load_exact_amplitudes(state, field_.values)


def _full_distribution(layout: RegisterLayout, circ: CircuitSpec, start: QuantumState) -> np.ndarray:
    body = CircuitSpec(layout, list(circ.gates))  # measure everything, no mid-circuit projection
    return apply_circuit(start, body).probabilities()


def run_per_step(config: ExperimentConfig) -> RunArtifacts:
    config.validate()
    if config.mode != "per_step":
        raise ConfigError("run_per_step needs mode=per_step")
    model, grid = config.lattice, config.grid_obj
    layout = make_layout(model, grid, config.encoding, flags=config.n_flags)
    start = config.initial()
    art = RunArtifacts(config, oracle=_oracle(config, start), qubits=layout.n)
    rng = np.random.default_rng(config.seed)
    noisy = bool(config.noise_lambda or config.noise_background)
    accept = 1 if config.n_flags else 0
    use_mps = config.loader_params is not None
    current = start
    art.fields.append(start)
    art.fidelities.append(1.0)
    art.moments.append(estimate_moments(start.normalized() ** 2, grid))
    for t in range(config.steps):
        step = build_step(config, current, layout)
        if t == 0:
            art.step_cx, art.step_cx_by_tag = step.cx_count, step.cx_by_tag()
        p_ideal = _full_distribution(layout, step, _load(layout, current, use_mps))
        _, ideal_tri = triage_shots(p_ideal, layout, accept)
        if ideal_tri.usable < 1e-14:
            raise PostSelectionError(f"step {t + 1}: no amplitude left in |0>_D")
        art.success_probabilities.append(float(ideal_tri.usable))
        p_meas = inject_noise(p_ideal, layout, config.noise_lambda, config.noise_background, accept) \
            if noisy else p_ideal
        data = sample_shots(p_meas, config.shots, int(rng.integers(2**32))) if config.shots else p_meas
        grid_data, tri = triage_shots(data, layout, accept)
        art.triage.append(tri)
        if tri.usable <= 0:
            raise PostSelectionError(f"step {t + 1}: every shot was discarded")
        if noisy:
            comp = noise_estimation_circuit(step)
            q_ideal = _full_distribution(layout, comp, _load(layout, current, use_mps))
            q_meas = inject_noise(q_ideal, layout, config.noise_lambda, config.noise_background, 0)
            q_data = sample_shots(q_meas, config.shots, int(rng.integers(2**32))) if config.shots else q_meas
            est = estimate_noise_channel(q_ideal, q_data, layout, grid, flag_accept=0)
            art.noise.append(est)
            moments, _ = mitigate_target(grid_data, tri, est, layout, grid)
        else:
            moments = estimate_moments(grid_data, grid)
        art.moments.append(moments)
        current = reconstruct_gaussian(moments, grid)
        art.fields.append(current)
        art.fidelities.append(state_fidelity(current, art.oracle[t + 1]))
    return art


def run_single_circuit(config: ExperimentConfig) -> RunArtifacts:
    """T steps in one circuit with deferred |0>_D projections after every step."""
    config.validate()
    if config.mode != "single_circuit":
        raise ConfigError("run_single_circuit needs mode=single_circuit")
    model, grid = config.lattice, config.grid_obj
    layout = make_layout(model, grid, config.encoding, flags=0)
    start = config.initial()
    art = RunArtifacts(config, oracle=_oracle(config, start), qubits=layout.n)
    lp = config.loader_params
    state = init_state(layout)
    if lp is None:
        state = load_exact_amplitudes(state, start.values)
    else:
        state = apply_circuit(state, mps_loader_circuit(mps_fit(start, lp[0]), lp[1], layout))
    step = build_step(config, None, layout)
    art.step_cx, art.step_cx_by_tag = step.cx_count, step.cx_by_tag()
    body = CircuitSpec(layout, list(step.gates))

    def grid_field(st: QuantumState, norm: float) -> DensityField:
        return DensityField(np.clip(st.grid_amplitudes().real, 0, None).reshape(grid.shape) * norm, grid)

    norm0 = start.norm
    art.fields.append(grid_field(state, norm0))
    art.fidelities.append(state_fidelity(state.grid_amplitudes(), art.oracle[0].values))
    for t in range(config.steps):
        state = apply_circuit(state, body)
        state, p = post_select(state, "direction", 0)
        art.success_probabilities.append(p)
        norm = norm0 * np.sqrt(art.success_product)
        art.fields.append(grid_field(state, norm))
        art.fidelities.append(state_fidelity(state.grid_amplitudes(), art.oracle[t + 1].values))
    if config.shots:
        counts = sample_shots(np.abs(state.grid_amplitudes()) ** 2, config.shots, config.seed)
        art.final_counts = {int(i): int(counts[i]) for i in np.flatnonzero(counts)}
        art.moments.append(estimate_moments(counts, grid))
    return art


def run_noise_companion(config: ExperimentConfig, loader_field: DensityField | None = None):
    """Noise estimate from the collision-free companion of the first step."""
    config.validate()
    model, grid = config.lattice, config.grid_obj
    layout = make_layout(model, grid, config.encoding, flags=config.n_flags)
    current = loader_field or config.initial()
    use_mps = config.loader_params is not None
    comp = noise_estimation_circuit(build_step(config, current, layout))
    q_ideal = _full_distribution(layout, comp, _load(layout, current, use_mps))
    q_meas = inject_noise(q_ideal, layout, config.noise_lambda, config.noise_background, 0)
    rng = np.random.default_rng(config.seed)
    data = sample_shots(q_meas, config.shots, int(rng.integers(2**32))) if config.shots else q_meas
    return estimate_noise_channel(q_ideal, data, layout, grid, flag_accept=0)


def run(config: ExperimentConfig) -> RunArtifacts:
    return run_per_step(config) if config.mode == "per_step" else run_single_circuit(config)


# output ----------------------------------------------------------------

def _fmt(x) -> str:
    return format(float(x), ".17g")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def emit_outputs(art: RunArtifacts, directory) -> list[str]:
    """Write fields, metrics, plot data files and a gnuplot script; returns paths."""
    os.makedirs(directory, exist_ok=True)
    fdir = os.path.join(directory, "fields")
    os.makedirs(fdir, exist_ok=True)
    written = []
    for t, f in enumerate(art.fields):
        path = os.path.join(fdir, f"field_t{t:03d}.csv")
        write_field_csv(f, path)
        written.append(path)

    cfg = art.config
    report = resource_report(cfg.model, cfg.grid, cfg.encoding, convention="circuit")
    metrics = {
        "config": {k: v for k, v in cfg.to_dict().items() if k != "out"},
        "qubits": art.qubits,
        "step_cx": art.step_cx,
        "step_cx_by_tag": dict(sorted(art.step_cx_by_tag.items())),
        "fidelity": art.fidelities,
        "success_probabilities": art.success_probabilities,
        "success_product": art.success_product,
        "norm_ratio": art.norm_ratio,
        "legacy_success": art.legacy_success(),
        "streaming_report": asdict(report),
        "noise": [asdict(n) for n in art.noise],
        "final_counts": art.final_counts,
    }
    path = os.path.join(directory, "metrics.json")
    with open(path, "w") as fh:
        json.dump(metrics, fh, indent=1, sort_keys=True, default=_json_default)
    written.append(path)

    path = os.path.join(directory, "moments.json")
    with open(path, "w") as fh:
        fh.write("[\n" + ",\n".join(m.to_json() for m in art.moments) + "\n]\n")
    written.append(path)

    path = os.path.join(directory, "success_probability.csv")
    with open(path, "w") as fh:
        fh.write("step,p_step,lcu_product,norm_ratio,legacy\n")
        prod = 1.0
        for t, p in enumerate(art.success_probabilities, start=1):
            prod *= p
            ratio = art.oracle[t].norm**2 / art.oracle[0].norm**2
            fh.write(f"{t},{_fmt(p)},{_fmt(prod)},{_fmt(ratio)},{_fmt(art.legacy_success(t))}\n")
    written.append(path)

    path = os.path.join(directory, "triage.csv")
    with open(path, "w") as fh:
        fh.write("step,total,perpendicular,flagged,usable\n")
        for t, tri in enumerate(art.triage, start=1):
            fh.write(f"{t},{_fmt(tri.total)},{_fmt(tri.perpendicular)},{_fmt(tri.flagged)},{_fmt(tri.usable)}\n")
    written.append(path)

    path = os.path.join(directory, "resources.csv")
    write_table_csv(path)
    written.append(path)

    path = os.path.join(directory, "fidelity.dat")
    with open(path, "w") as fh:
        fh.write("# step fidelity\n")
        for t, f in enumerate(art.fidelities):
            fh.write(f"{t} {_fmt(f)}\n")
    written.append(path)

    path = os.path.join(directory, "plots.gp")
    with open(path, "w") as fh:
        fh.write(
            "set datafile separator ','\n"
            "set logscale y\nset xlabel 'time step'\nset ylabel 'success probability'\n"
            "plot 'success_probability.csv' every ::1 using 1:3 with linespoints title 'LCU', \\\n"
            "     '' every ::1 using 1:5 with linespoints title 'legacy'\n"
            "pause -1\n"
            "set datafile separator whitespace\nunset logscale y\nset ylabel 'fidelity'\n"
            "plot 'fidelity.dat' using 1:2 with linespoints title 'fidelity to classical LBM'\n"
            "pause -1\n"
        )
    written.append(path)
    return written


def with_overrides(config: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
