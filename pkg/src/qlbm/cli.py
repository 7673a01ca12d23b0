"""Command line entry point: run, resources, noise-estimate, compare."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace

from .circuits.resources import grid_sweep, resource_report, table_rows, write_table_csv
from .pipeline import ConfigError, ExperimentConfig, emit_outputs, run, run_noise_companion
from .qsim import PostSelectionError
from .readout import state_fidelity

EXIT_OK, EXIT_CONFIG, EXIT_POSTSELECT, EXIT_IO = 0, 2, 3, 4


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; flags override its entries")
    p.add_argument("--model")
    p.add_argument("--grid", help="e.g. 16x16 or 8,8,8")
    p.add_argument("--field", help="uniform:ux,uy | swirl2d | swirl3d")
    p.add_argument("--init", help="gaussian:mx,my,s | sin2d | sin3d")
    p.add_argument("--steps", type=int)
    p.add_argument("--mode", choices=["per-step", "single-circuit", "per_step", "single_circuit"])
    p.add_argument("--encoding", choices=["dense", "one-hot", "one_hot"])
    p.add_argument("--loader", help="exact | mps:chi,layers")
    p.add_argument("--shots", type=int)
    p.add_argument("--noise-lambda", type=float)
    p.add_argument("--noise-background", type=float)
    p.add_argument("--flags", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")


def _config(args) -> ExperimentConfig:
    keys = ["model", "grid", "field", "init", "steps", "mode", "encoding", "loader", "shots",
            "noise_lambda", "noise_background", "flags", "seed", "out"]
    overrides = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    if args.config:
        return ExperimentConfig.from_file(args.config, **overrides).validate()
    return ExperimentConfig.from_strings(overrides).validate()


def cmd_run(args) -> int:
    cfg = _config(args)
    art = run(cfg)
    summary = {
        "qubits": art.qubits,
        "step_cx": art.step_cx,
        "final_fidelity": art.fidelities[-1],
        "min_fidelity": min(art.fidelities),
        "success_product": art.success_product,
        "norm_ratio": art.norm_ratio,
    }
    if cfg.out:
        emit_outputs(art, cfg.out)
        summary["out"] = cfg.out
    print(json.dumps(summary, indent=1))
    return EXIT_OK


def cmd_resources(args) -> int:
    if args.table:
        rows = table_rows()
        if args.csv:
            write_table_csv(args.csv, rows)
        for r in rows:
            print(",".join(str(v) for v in r.values()))
        return EXIT_OK
    if args.sweep:
        for r in grid_sweep(args.model or "D2Q5"):
            print(r)
        return EXIT_OK
    if not args.model or not args.grid:
        raise ConfigError("resources needs --model and --grid (or --table / --sweep)")
    shape = tuple(int(s) for s in args.grid.lower().replace("x", ",").split(","))
    rep = resource_report(args.model, shape, args.encoding.replace("-", "_"), args.convention)
    print(json.dumps(asdict(rep), indent=1))
    return EXIT_OK


def cmd_noise(args) -> int:
    cfg = _config(args)
    est = run_noise_companion(cfg)
    print(json.dumps({"lambda": est.lam, **asdict(est)}, indent=1))
    return EXIT_OK


def cmd_compare(args) -> int:
    """Per-step readout against single-circuit evolution on one Gaussian config."""
    cfg = _config(args)
    per = run(replace(cfg, mode="per_step").validate())
    single = run(replace(cfg, mode="single_circuit", flags=0, shots=0, noise_lambda=0.0,
                         noise_background=0.0).validate())
    out = {
        "per_step_fidelity": per.fidelities,
        "single_circuit_fidelity": single.fidelities,
        "final_mode_agreement": state_fidelity(per.fields[-1], single.fields[-1]),
    }
    print(json.dumps(out, indent=1))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qlbm", description="Quantum lattice Boltzmann experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run an experiment and optionally write outputs")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("resources", help="streaming-operator qubit and CX counts")
    p.add_argument("--model")
    p.add_argument("--grid")
    p.add_argument("--encoding", default="one_hot", choices=["dense", "one-hot", "one_hot"])
    p.add_argument("--convention", default="table", choices=["table", "circuit"])
    p.add_argument("--table", action="store_true", help="reference-table rows with our counts")
    p.add_argument("--sweep", action="store_true", help="CX against grid side")
    p.add_argument("--csv", help="write the table rows here")
    p.set_defaults(func=cmd_resources)
    p = sub.add_parser("noise-estimate", help="run the noise-estimation companion")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_noise)
    p = sub.add_parser("compare", help="per-step readout against single-circuit evolution")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PostSelectionError as exc:
        print(f"post-selection failed: {exc}", file=sys.stderr)
        return EXIT_POSTSELECT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
