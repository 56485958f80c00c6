import io
import os

import numpy as np
import pytest

from surfdk.cli import main
from surfdk.config import parse_config
from surfdk.exceptions import ConfigurationError, DimensionError
from surfdk.experiments import (
    build_grid,
    covariance_pairs,
    disk_density,
    run_equilibrium,
    run_estimate_dt,
    run_potential,
    run_transient,
    snapshot_steps,
)
from surfdk.fvm import discrete_mass
from surfdk.geometry import HeightSurface, precompute_grid
from surfdk.io import read_snapshot, snapshot_name, write_snapshot


def _small_transient(tmp_path=None, **extra):
    overrides = {
        "grid.I": 16,
        "grid.J": 16,
        "particles.N": 2000,
        "run.dt": 1e-3,
        "run.steps": 40,
        "run.snapshot_times": "0.01, 0.02, 0.04",
    }
    if tmp_path is not None:
        overrides["output.dir"] = str(tmp_path)
    overrides.update(extra)
    return parse_config(experiment="transient", overrides=overrides)


# ---- initial conditions ----------------------------------------------------

def test_disk_initial_value():
    g = precompute_grid(HeightSurface.four_peak(4.0), 64, 64)
    rho = disk_density(g, (np.pi, np.pi), np.pi / 5)
    assert rho.max() == pytest.approx(0.801421, abs=1e-6)
    assert discrete_mass(rho, g) == pytest.approx(1.0, rel=1e-13)
    leb = disk_density(g, (np.pi, np.pi), np.pi / 5, "lebesgue")
    assert leb.max() == pytest.approx(0.8367, abs=1e-4)
    assert np.sum(leb) * g.dx * g.dy == pytest.approx(1.0, rel=1e-13)


def test_empty_disk_is_rejected():
    g = precompute_grid(HeightSurface.flat(), 4, 4)
    with pytest.raises(ConfigurationError, match="initial.radius"):
        disk_density(g, (0.1, 0.1), 0.01)


def test_snapshot_steps():
    assert snapshot_steps((0.47, 0.94, 1.41, 1.88), 1.506e-4) == [3121, 6242, 9363, 12483]


def test_covariance_pairs_are_distinct_cells():
    for a, b in covariance_pairs((16, 16)):
        assert a != b


# ---- snapshot files --------------------------------------------------------

def test_snapshot_round_trip(tmp_path, rng):
    g = precompute_grid(HeightSurface.sinusoidal(3.0), 5, 7)
    rho, counts = rng.random(g.shape), rng.random(g.shape) * 10
    path = tmp_path / snapshot_name("rho", 12)
    assert path.name == "rho_00000012.csv"
    write_snapshot(path, g, rho, counts)
    r2, c2 = read_snapshot(path, g)
    np.testing.assert_array_equal(r2, rho)
    np.testing.assert_array_equal(c2, counts)
    with pytest.raises(DimensionError):
        read_snapshot(path, precompute_grid(HeightSurface.flat(), 5, 6))
    with pytest.raises(ConfigurationError):
        read_snapshot(tmp_path / "nope.csv")


def test_initial_from_file(tmp_path):
    first = run_transient(_small_transient(tmp_path / "a", **{"noise.enabled": "false"}))
    snap = tmp_path / "a" / snapshot_name("rho", 40)
    again = run_transient(_small_transient(**{
        "noise.enabled": "false",
        "initial.kind": "file",
        "initial.path": str(snap),
        "run.snapshot_times": "0",
        "run.steps": 0,
    }))
    np.testing.assert_array_equal(again.snapshots[0], first.snapshots[-1])


# ---- experiment runs -------------------------------------------------------

def test_transient_conserves_mass_and_records_peaks():
    res = run_transient(_small_transient())
    assert res.snapshot_steps == [10, 20, 40]
    assert len(res.peak_rho) == 3
    assert res.checks["mass_conservation"]
    assert res.running_max_rho >= max(res.peak_rho)


def test_zero_noise_peak_decreases():
    res = run_transient(_small_transient(**{"noise.enabled": "false", "run.snapshot_times": "0,0.01,0.02,0.03,0.04"}))
    assert np.all(np.diff(res.peak_rho) < 0)
    assert res.negative_events == 0


def test_potential_with_zero_amplitude_is_transient():
    a = run_transient(_small_transient())
    b = run_potential(_small_transient(**{"potential.v0": 0}))
    for x, y in zip(a.snapshots, b.snapshots):
        np.testing.assert_array_equal(x, y)


def test_same_seed_same_files(tmp_path):
    run_transient(_small_transient(tmp_path / "a"))
    run_transient(_small_transient(tmp_path / "b"))
    run_transient(_small_transient(tmp_path / "c", **{"run.seed": 5}))
    name = snapshot_name("rho", 40)
    a, b, c = ((tmp_path / d / name).read_bytes() for d in "abc")
    assert a == b and a != c


def test_noise_off_equilibrium_is_stationary():
    cfg = parse_config(experiment="equilibrium", overrides={
        "grid.I": 8, "grid.J": 8, "run.equilibration_steps": 10, "run.steps": 100,
        "output.sample_every": 2, "noise.enabled": "false",
    })
    res = run_equilibrium(cfg)
    np.testing.assert_allclose(res.fvm.moments.rho.mean, res.theory.mean_rho, rtol=1e-12)
    np.testing.assert_allclose(res.fvm.moments.rho.variance, 0, atol=1e-24)
    assert res.checks == {}


def test_estimate_dt_runner():
    cfg = parse_config(experiment="estimate-dt", overrides={"grid.I": 16, "grid.J": 16})
    res = run_estimate_dt(cfg)
    assert res.checks["stable"]
    assert res.dt == pytest.approx(1.5625e-2 * res.dt_max)
    assert build_grid(cfg).shape == (16, 16)


# ---- command line ----------------------------------------------------------

def test_cli_success_and_manifest_rerun(tmp_path):
    out = io.StringIO()
    args = ["transient", "--grid.I", "16", "--grid.J", "16", "--particles.N", "500", "--run.dt", "1e-3",
            "--run.steps", "20", "--run.snapshot_times", "0.01", "--output.dir", str(tmp_path / "one")]
    assert main(args, out) == 0
    assert "PASS mass_conservation" in out.getvalue()
    manifest = tmp_path / "one" / "manifest.txt"
    text = manifest.read_text()
    assert "manifest.seed" in text

    # re-running from the manifest reproduces the output bit for bit
    rerun = tmp_path / "rerun.cfg"
    rerun.write_text(text.replace(str(tmp_path / "one"), str(tmp_path / "two")))
    assert main(["transient", "--config", str(rerun), "--quiet"], io.StringIO()) == 0
    name = snapshot_name("rho", 10)
    assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_cli_configuration_error(capsys):
    assert main(["equilibrium", "--grid.I", "1"], io.StringIO()) == 2
    assert "grid.I" in capsys.readouterr().err


def test_cli_failed_check_exits_one(tmp_path):
    # an absurdly tight tolerance on a short run must fail
    args = ["equilibrium", "--grid.I", "4", "--grid.J", "4", "--particles.per_cell", "10",
            "--run.equilibration_steps", "0", "--run.steps", "200", "--output.sample_every", "2",
            "--check.mean_rho", "1e-9", "--quiet"]
    out = io.StringIO()
    assert main(args, out) == 1
    assert "FAIL fvm.mean_rho" in out.getvalue()


def test_cli_module_entry_point():
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "surfdk", "--version"], capture_output=True, text=True,
                       env={**os.environ})
    assert r.returncode == 0 and r.stdout.startswith("surfdk ")
