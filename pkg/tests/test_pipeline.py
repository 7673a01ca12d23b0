import json
import os
from dataclasses import replace

import numpy as np
import pytest

from qlbm import cli
from qlbm.lattice import read_field_csv
from qlbm.pipeline import (
    ConfigError,
    ExperimentConfig,
    build_step,
    emit_outputs,
    run,
    run_noise_companion,
    run_per_step,
    run_single_circuit,
)
from qlbm.qsim import PostSelectionError


def _cfg(**kw):
    base = dict(model="D2Q5", grid=(16, 16), steps=3, shots=0)
    base.update(kw)
    return ExperimentConfig(**base).validate()


# configuration -------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    dict(model="D4Q1"),
    dict(model="D3Q7"),  # 3D model on a 2D grid
    dict(grid=(128, 128)),
    dict(mode="sideways"),
    dict(encoding="dense", flags=2),
    dict(flags=9),
    dict(init="sin2d"),  # per-step readout needs a Gaussian
    dict(mode="single_circuit", flags=0, noise_lambda=0.1),
    dict(noise_lambda=1.0),
    dict(noise_background=0.01),
    dict(field="uniform:0.6,0"),  # negative k
    dict(loader="mps:2"),
    dict(steps=-1),
])
def test_invalid_configs(kw):
    with pytest.raises(ConfigError):
        _cfg(**kw)


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text("# comment\nmodel = D2Q9\ngrid = 8x8\nsteps=2\nnoise-lambda = 0.05\n")
    cfg = ExperimentConfig.from_file(p, steps="4")
    assert (cfg.model, cfg.grid, cfg.steps, cfg.noise_lambda) == ("D2Q9", (8, 8), 4, 0.05)
    p.write_text("colour = red\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(p)
    p.write_text("just words\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(p)


def test_defaults():
    assert ExperimentConfig().shots == 10_000
    assert _cfg().n_flags == 4
    assert _cfg(encoding="dense").n_flags == 0
    assert _cfg(mode="single_circuit", init="sin2d").n_flags == 0


def test_step_structure():
    step = build_step(_cfg())
    tags = step.cx_by_tag()
    assert tags["stream"] == 244
    assert set(tags) >= {"prep", "unprep", "stream", "flag"}
    assert step.markers[-1].register == "direction" and step.markers[-1].position == len(step.gates)


# runs ----------------------------------------------------------------------

def test_per_step_exact_tracks_oracle():
    art = run_per_step(_cfg(steps=5))
    assert len(art.fields) == len(art.fidelities) == 6
    assert min(art.fidelities) >= 0.999
    ratios = [art.oracle[t + 1].norm**2 / art.oracle[t].norm**2 for t in range(5)]
    # each step starts from the reconstructed Gaussian, so p is close to but not equal to the oracle ratio
    assert np.allclose(art.success_probabilities, ratios, rtol=1e-2)
    assert all(t.flagged == pytest.approx(0, abs=1e-12) for t in art.triage)


def test_zero_steps():
    art = run(_cfg(steps=0))
    assert art.fidelities == [1.0] and art.success_product == 1.0 and art.norm_ratio == 1.0
    single = run(_cfg(steps=0, mode="single_circuit", init="sin2d"))
    assert single.fidelities[0] == pytest.approx(1.0)


@pytest.mark.parametrize("kw", [
    dict(),
    dict(encoding="dense"),
    dict(model="D3Q7", grid=(8, 8, 8), field="swirl3d", init="sin3d"),
])
def test_single_circuit_matches_oracle(kw):
    cfg = _cfg(mode="single_circuit", **({"init": "sin2d"} | kw))
    art = run_single_circuit(cfg)
    assert min(art.fidelities) >= 1 - 1e-9
    assert art.success_product == pytest.approx(art.norm_ratio, rel=1e-9)
    assert art.legacy_success() < art.success_product
    assert np.allclose(art.fields[-1].values, art.oracle[-1].values, atol=1e-9)


def test_mps_loader_with_shots():
    art = run(_cfg(loader="mps:2,2", shots=10_000, seed=4))
    assert min(art.fidelities) >= 0.99
    assert art.step_cx_by_tag["load"] == 28


def test_noisy_run_is_mitigated():
    cfg = _cfg(steps=2, noise_lambda=0.15, noise_background=2e-4, seed=1)
    art = run(cfg)
    clean = run(replace(cfg, noise_lambda=0.0, noise_background=0.0))
    assert [n.lam for n in art.noise] == pytest.approx([0.15, 0.15], abs=1e-9)
    for a, b in zip(art.moments[1:], clean.moments[1:]):
        assert np.allclose(a.mean, b.mean, atol=1e-8)
        assert np.allclose(a.cov, b.cov, atol=1e-8)


def test_noise_companion():
    est = run_noise_companion(_cfg(noise_lambda=0.1, noise_background=1e-4, shots=200_000, seed=2))
    assert est.lam == pytest.approx(0.1, abs=0.01)
    assert est.b == pytest.approx(1e-4, abs=5e-5)


def test_run_rejects_wrong_mode():
    with pytest.raises(ConfigError):
        run_per_step(_cfg(mode="single_circuit", init="sin2d"))
    with pytest.raises(ConfigError):
        run_single_circuit(_cfg())


# outputs -------------------------------------------------------------------

def _read_tree(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            full = os.path.join(dirpath, f)
            with open(full, "rb") as fh:
                out[os.path.relpath(full, root)] = fh.read()
    return out


def test_outputs_deterministic(tmp_path):
    cfg = _cfg(steps=2, shots=5000, seed=9, loader="mps:2,2")
    emit_outputs(run(cfg), tmp_path / "a")
    emit_outputs(run(cfg), tmp_path / "b")
    a, b = _read_tree(tmp_path / "a"), _read_tree(tmp_path / "b")
    assert a == b
    assert {"metrics.json", "moments.json", "success_probability.csv", "triage.csv", "resources.csv",
            "fidelity.dat", "plots.gp", os.path.join("fields", "field_t002.csv")} <= set(a)
    metrics = json.loads(a["metrics.json"])
    assert metrics["step_cx_by_tag"]["stream"] == 244 and len(metrics["fidelity"]) == 3
    f2 = read_field_csv(tmp_path / "a" / "fields" / "field_t002.csv")
    assert f2.values.shape == (16, 16)
    rows = a["success_probability.csv"].decode().splitlines()
    assert rows[0] == "step,p_step,lcu_product,norm_ratio,legacy" and len(rows) == 3


# CLI -----------------------------------------------------------------------

def test_cli_run_and_resources(tmp_path, capsys):
    assert cli.main(["run", "--steps", "1", "--out", str(tmp_path / "o")]) == 0
    assert json.loads(capsys.readouterr().out)["step_cx"] > 244
    assert cli.main(["resources", "--model", "D2Q5", "--grid", "16x16"]) == 0
    assert json.loads(capsys.readouterr().out)["cx_one_hot"] == 244
    assert cli.main(["resources", "--table", "--csv", str(tmp_path / "t.csv")]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 8
    assert cli.main(["noise-estimate", "--noise-lambda", "0.1", "--shots", "0"]) == 0
    assert json.loads(capsys.readouterr().out)["lambda"] == pytest.approx(0.1)


def test_cli_compare(capsys):
    assert cli.main(["compare", "--grid", "8x8", "--steps", "2", "--init", "gaussian:3.5,4.5,1.5"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["final_mode_agreement"] >= 0.99


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    assert cli.main(["run", "--model", "D9Q1"]) == cli.EXIT_CONFIG
    assert cli.main(["resources"]) == cli.EXIT_CONFIG
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["run", "--steps", "0", "--out", str(blocker / "sub")]) == cli.EXIT_IO
    assert cli.main(["run", "--config", str(tmp_path / "missing.cfg")]) == cli.EXIT_IO

    def boom(cfg):
        raise PostSelectionError("no amplitude left")
    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["run"]) == cli.EXIT_POSTSELECT
    assert "post-selection" in capsys.readouterr().err
