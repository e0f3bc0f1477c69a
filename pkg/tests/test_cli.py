import os
import subprocess
import sys
import threading
from pathlib import Path

import numpy as np
import pytest

from kklab import cli
from kklab.errors import ComparisonError
from kklab.io import atomic_write, read_csv, write_csv
from kklab.scenario import load_scenario

SCN = Path(__file__).resolve().parents[1] / "scenarios"


def kk(*argv):
    return cli.main([*map(str, argv), "--quiet"])


def test_compare_uniform_field_passes(tmp_path):
    assert kk("compare", "--scenario", SCN / "uniform_field.toml", "--out", tmp_path) == 0
    meta, header, cols = read_csv(tmp_path / "uniform_field_compare.csv")
    assert header[0] == "particle"
    assert np.all(cols["max"] <= 1e-7)


def test_compare_mismatched_seed_fails(tmp_path, capsys):
    code = kk("compare", "--scenario", SCN / "uniform_field_mismatch.toml", "--out", tmp_path)
    assert code == ComparisonError.exit_code != 0
    _, _, cols = read_csv(tmp_path / "uniform_field_mismatch_compare.csv")
    assert np.all(cols["max"] > 1e-7)
    assert "exceeds threshold" in capsys.readouterr().err


def test_alpha_constant_profile_is_algebraic(tmp_path):
    assert kk("alpha", "--scenario", SCN / "alpha_constant.toml", "--out", tmp_path) == 0
    meta, _, cols = read_csv(tmp_path / "alpha_constant_alpha_p0.csv")
    exact = np.sqrt((1 / 1.7) * (1 + 0.49 / 1.7 ** 2))
    assert np.max(np.abs(cols["alpha"] - exact)) <= 1e-12
    assert meta["iterations"] == "0"


def test_csv_header_records_hash_and_tolerances(tmp_path):
    kk("project", "--scenario", SCN / "uniform_field.toml", "--out", tmp_path)
    text = (tmp_path / "uniform_field_project_p0.csv").read_text().splitlines()
    assert text[0].startswith("# config_hash=")
    for key in ("abs_tol=", "rel_tol=", "tol="):
        assert key in text[0]
    assert text[1].split(",")[0] == "tr"
    meta, _, _ = read_csv(tmp_path / "uniform_field_project_p0.csv")
    assert meta["config_hash"] == load_scenario(SCN / "uniform_field.toml").digest


@pytest.mark.parametrize("command,scenario", [
    ("project", "sinusoidal_4d.toml"),
    ("reduce", "reduce_sinusoidal.toml"),
    ("alpha", "alpha_sinusoidal.toml"),
])
def test_output_is_bit_identical_across_runs(tmp_path, command, scenario):
    for d in ("one", "two"):
        assert kk(command, "--scenario", SCN / scenario, "--out", tmp_path / d) == 0
    files = sorted(p.name for p in (tmp_path / "one").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "two").iterdir())
    for name in files:
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert kk("alpha", "--scenario", SCN / "alpha_constant.toml") == 0
    assert (tmp_path / "env" / "alpha_constant_alpha_p0.csv").is_file()


def test_reduce_reports_second_order_residuals(tmp_path):
    assert kk("reduce", "--scenario", SCN / "reduce_sinusoidal.toml", "--out", tmp_path) == 0
    _, _, cols = read_csv(tmp_path / "reduce_sinusoidal_reduce.csv")
    ratios = cols["ratio"][cols["level"] > 0]
    assert np.all(np.abs(ratios - 4) < 0.5)
    assert (tmp_path / "reduce_sinusoidal_reduce.svg").read_text().startswith("<svg")


def test_reduce_seeded_modes_depend_on_seed(tmp_path):
    scn = load_scenario(SCN / "reduce_sinusoidal.toml")
    scn.run["modes"] = []
    scn.run["levels"] = 1
    for seed in (1, 2):
        assert cli.run_command(scn, "reduce", tmp_path / str(seed), seed=seed, echo=lambda *a: None) == 0
    a = (tmp_path / "1" / "reduce_sinusoidal_spectrum.csv").read_text()
    b = (tmp_path / "2" / "reduce_sinusoidal_spectrum.csv").read_text()
    assert a != b


def test_plot_writes_svg_from_existing_csv(tmp_path):
    assert kk("plot", "--scenario", SCN / "uniform_field.toml", "--out", tmp_path) == 2
    kk("geodesic", "--scenario", SCN / "uniform_field.toml", "--out", tmp_path)
    assert kk("plot", "--scenario", SCN / "uniform_field.toml", "--out", tmp_path) == 0
    svg = (tmp_path / "uniform_field_geodesic_p0.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg


def test_confined_projection_reports_boundary(tmp_path):
    lines = []
    scn = load_scenario(SCN / "tachyon_confined.toml")
    assert cli.run_command(scn, "project", tmp_path, echo=lines.append) == 0
    assert any("confined" in s for s in lines)
    _, _, cols = read_csv(tmp_path / "tachyon_confined_project_p0.csv")
    assert np.all(cols["omega_r"][:-1] > 0)


def test_characteristic_matches_velocity_form(tmp_path):
    assert kk("characteristic", "--scenario", SCN / "sinusoidal_4d.toml", "--out", tmp_path) == 0
    _, _, cols = read_csv(tmp_path / "sinusoidal_4d_characteristic_p0.csv")
    assert np.max(cols["lfe_deviation"]) <= 1e-8
    assert np.max(np.abs(cols["shell_err"])) <= 1e-9


def test_bad_scenario_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[constants]\na0 = -2\n")
    assert kk("alpha", "--scenario", bad, "--out", tmp_path) == 2
    assert "constants.a0" in capsys.readouterr().err
    assert kk("alpha", "--scenario", tmp_path / "missing.toml") == 2


def test_console_script_entry_point(tmp_path):
    env = {**os.environ, cli.OUT_ENV: str(tmp_path)}
    out = subprocess.run([sys.executable, "-m", "kklab.cli", "alpha", "--scenario", str(SCN / "alpha_constant.toml")],
                         capture_output=True, text=True, env=env)
    assert out.returncode == 0, out.stderr
    assert "Newton iterations" in out.stdout


def test_concurrent_atomic_writes_leave_complete_files(tmp_path):
    target = tmp_path / "shared.csv"
    bodies = [str(i) * 20000 for i in range(8)]
    threads = [threading.Thread(target=atomic_write, args=(target, b)) for b in bodies]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert target.read_text() in bodies
    assert [p.name for p in tmp_path.iterdir()] == ["shared.csv"]


def test_csv_floats_round_trip_exactly(tmp_path):
    vals = np.random.default_rng(0).normal(size=50)
    write_csv(tmp_path / "v.csv", ["v"], [[v] for v in vals], {"config_hash": "x"})
    _, _, cols = read_csv(tmp_path / "v.csv")
    np.testing.assert_array_equal(cols["v"], vals)
    with pytest.raises(Exception):
        write_csv(tmp_path / "w.csv", ["v"], [[1.0]], {})
