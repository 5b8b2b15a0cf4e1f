"""Config parsing, binary round trips, the orchestrated run/sweep and the CLI."""

import json
import struct
from pathlib import Path

import numpy as np
import pytest

from levylab.cli import main as cli_main
from levylab.config import ConfigError, load_config, set_by_path
from levylab.drifts import make_divfree
from levylab.fieldio import (
    FormatError,
    read_field,
    read_fields,
    read_symbol_table,
    read_velocity,
    write_field,
    write_fields,
    write_symbol_table,
    write_velocity,
)
from levylab.grid import Grid, SampledField, smooth_random_field
from levylab.kernels import LevyKernel, tabulate_symbol
from levylab.runner import run, sweep
from levylab.spaces import MorreyParams


@pytest.fixture()
def scenario(tmp_path):
    base = tmp_path / "base.yaml"
    base.write_text(
        "grid: {points_per_dim: 32}\n"
        "kernel: {profile: two-exponent, alpha: 0.8, delta: 0.6}\n"
    )
    cfg = tmp_path / "scenario.yaml"
    cfg.write_text(
        "include: [base.yaml]\n"
        "seed: 7\n"
        f"output_dir: {tmp_path / 'out'}\n"
        "drift:\n"
        "  kind: stream-function\n"
        "  target_norm: 1.0\n"
        "  mollify_epsilon: 0.3\n"
        "  morrey: {q: 4.0, a: 2.5, local: true}\n"
        "theta0: {kind: positive-smooth, amplitude: 1.0, offset: 0.0}\n"
        "solver: {scheme: imex-spectral, epsilon_visc: 1.0e-2, dt: 2.0e-3, horizon: 0.05}\n"
        "verifiers: [symbol-bounds, max-principle, positivity, stroock-varopoulos,"
        " besov-chain, transfer]\n"
    )
    return cfg


# --- config -------------------------------------------------------------------


def test_config_include_merge_and_defaults(scenario):
    cfg = load_config(scenario)
    assert cfg["grid"]["points_per_dim"] == 32  # from the include
    assert cfg["kernel"]["alpha"] == 0.8
    assert cfg["solver"]["max_iters"] == 60  # default filled in


def test_config_rejects_unknown_key(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("solver: {dtt: 0.01}\n")
    with pytest.raises(ConfigError, match="solver.dtt"):
        load_config(bad)


def test_config_rejects_unknown_verifier(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("verifiers: [max-principle, does-not-exist]\n")
    with pytest.raises(ConfigError, match="does-not-exist"):
        load_config(bad)


def test_set_by_path_scalar_only():
    cfg = load_config({})
    out = set_by_path(cfg, "solver.epsilon_visc", 0.5)
    assert out["solver"]["epsilon_visc"] == 0.5
    assert cfg["solver"]["epsilon_visc"] != 0.5  # original untouched
    with pytest.raises(ConfigError):
        set_by_path(cfg, "solver.nonexistent", 1)
    with pytest.raises(ConfigError):
        set_by_path(cfg, "grid", 1)


# --- binary formats --------------------------------------------------------------


def test_field_round_trip(tmp_path):
    grid = Grid(points_per_dim=16)
    fld = SampledField(grid, smooth_random_field(grid, np.random.default_rng(1)))
    path = tmp_path / "f.bin"
    write_field(path, fld)
    back = read_field(path)
    assert back.grid == grid
    np.testing.assert_array_equal(back.values, fld.values)


def test_field_container_multiple(tmp_path):
    grid = Grid(points_per_dim=16)
    fields = [
        SampledField(grid, smooth_random_field(grid, np.random.default_rng(s)))
        for s in range(3)
    ]
    path = tmp_path / "seq.bin"
    write_fields(path, fields, grid)
    gback, fback = read_fields(path)
    assert gback == grid and len(fback) == 3
    for a, b in zip(fields, fback):
        np.testing.assert_array_equal(a.values, b.values)


def test_field_format_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + struct.pack("<I", 1))
    with pytest.raises(FormatError):
        read_field(path)


def test_symbol_table_round_trip(tmp_path):
    grid = Grid(points_per_dim=16)
    k = LevyKernel(alpha=0.8, delta=0.6, profile="two-exponent")
    sym = tabulate_symbol(k, grid)
    path = tmp_path / "sym.bin"
    write_symbol_table(path, sym, k)
    back = read_symbol_table(path)
    assert back["alpha"] == k.alpha and back["delta"] == k.delta
    np.testing.assert_array_equal(back["values"], sym.values)


def test_velocity_round_trip(tmp_path):
    grid = Grid(points_per_dim=16)
    v = make_divfree(
        {"kind": "stream-function", "time_nodes": 3, "horizon": 1.0, "envelope": "rotating"},
        grid,
        MorreyParams(q=2, a=1.0),
        np.random.default_rng(2),
    )
    path = tmp_path / "v.bin"
    write_velocity(path, v)
    back = read_velocity(path)
    np.testing.assert_array_equal(back.time_nodes, v.time_nodes)
    np.testing.assert_array_equal(back.components, v.components)


# --- runner -----------------------------------------------------------------------


def test_run_produces_certificates_and_artifacts(scenario, tmp_path):
    rep = run(scenario)
    assert rep.all_pass
    assert set(rep.certificates) == {
        "symbol-bounds", "max-principle", "positivity", "stroock-varopoulos",
        "besov-chain", "transfer",
    }
    out = Path(rep.output_dir)
    for name in ("report.json", "timing.json", "norms.csv", "norms.png",
                 "theta0.bin", "theta_final.bin", "symbol.bin"):
        assert (out / name).exists(), name


def test_run_minimal_symbol_only(tmp_path):
    cfg = {
        "seed": 1,
        "output_dir": str(tmp_path / "mini"),
        "grid": {"points_per_dim": 16},
        "verifiers": ["symbol-bounds"],
        "solver": {"horizon": 0.01, "dt": 2e-3},
    }
    rep = run(cfg)
    assert rep.all_pass
    assert list(rep.certificates) == ["symbol-bounds"]


def test_run_is_byte_deterministic(scenario, tmp_path):
    run(scenario, output_dir=tmp_path / "d1")
    run(scenario, output_dir=tmp_path / "d2")
    a = (tmp_path / "d1" / "report.json").read_bytes()
    b = (tmp_path / "d2" / "report.json").read_bytes()
    assert a == b


def test_run_records_stage_failure_and_skips(tmp_path):
    # CFL-violating configuration: solve fails, verifier certificates record it
    cfg = {
        "seed": 3,
        "output_dir": str(tmp_path / "failing"),
        "grid": {"points_per_dim": 16},
        "drift": {"kind": "shear", "amplitude": 100.0,
                  "morrey": {"q": 2.0, "a": 1.0, "local": True}},
        "solver": {"dt": 0.05, "horizon": 0.1},
        "verifiers": ["max-principle"],
    }
    rep = run(cfg)
    assert "error" in rep.stages["solve"]
    assert rep.certificates["max-principle"]["verdict"] == "fail"
    assert not rep.all_pass


def test_run_full_pipeline_with_lab_and_probe(tmp_path):
    cfg = {
        "seed": 5,
        "output_dir": str(tmp_path / "full"),
        "grid": {"points_per_dim": 128},
        "kernel": {"profile": "two-exponent", "alpha": 0.8, "delta": 0.6},
        "theta0": {"kind": "rough", "exponent": 0.35, "octaves": 7},
        "solver": {"epsilon_visc": 0.0, "dt": 1e-4, "horizon": 5e-4},
        "verifiers": ["max-principle"],
        "molecule_lab": {"enabled": True, "gamma": 0.2, "omega": 0.5, "q": 20.0,
                         "mu": 1.0, "r_list": [0.25], "T0": 1.0, "eps_step": 0.2,
                         "dt": 5e-3},
        "holder_probe": {"enabled": True, "gamma": 0.2, "omega": 0.5, "zeta": 2.0},
    }
    rep = run(cfg)
    assert rep.certificates["molecule-deformation"]["verdict"] == "pass"
    assert "holder_probe" in rep.stages
    assert rep.stages["holder_probe"].get("gamma_dual") is not None
    out = Path(rep.output_dir)
    assert list(out.glob("trace_*.csv")) and list(out.glob("trace_*.png"))
    assert (out / "pairings.csv").exists() and (out / "pairings.png").exists()


# --- sweep ------------------------------------------------------------------------


def test_sweep_emits_table_and_figure(scenario, tmp_path):
    out = sweep(scenario, "solver.epsilon_visc", [4e-2, 1e-2],
                output_dir=tmp_path / "sw")
    assert len(out["rows"]) == 2
    assert (tmp_path / "sw" / "sweep.csv").exists()
    assert (tmp_path / "sw" / "sweep.png").exists()
    assert all(r["all_pass"] for r in out["rows"])


def test_sweep_rejects_empty_values(scenario):
    with pytest.raises(ValueError):
        sweep(scenario, "solver.epsilon_visc", [])


# --- CLI --------------------------------------------------------------------------


def test_cli_run_exit_code(scenario, capsys):
    code = cli_main(["run", str(scenario)])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["certificates"]["max-principle"] == "pass"


def test_cli_check_kernel(scenario, capsys):
    assert cli_main(["check-kernel", str(scenario)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["nondegeneracy"]["passed"] is True


def test_cli_norms(tmp_path, capsys):
    grid = Grid(points_per_dim=16)
    fld = SampledField(grid, smooth_random_field(grid, np.random.default_rng(4)))
    path = tmp_path / "f.bin"
    write_field(path, fld)
    assert cli_main(["norms", str(path), "--spec", '{"kind": "holder", "gamma": 0.4}']) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["norm_name"] == "holder"
    assert payload["value"] > 0
