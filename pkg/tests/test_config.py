import math

import pytest

from surfdk.config import (
    EXPERIMENTS,
    DEFAULT_DT,
    ExperimentConfig,
    format_config,
    parse_config,
    parse_text,
)
from surfdk.exceptions import ConfigurationError


def _write(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return p


def test_minimal_equilibrium_resolves_preset(tmp_path):
    cfg = parse_config(_write(tmp_path, "experiment = equilibrium\n"))
    assert (cfg.surface_kind, cfg.amplitude, cfg.I, cfg.J) == ("sinusoidal_a", 3.0, 32, 32)
    assert cfg.particle_count == 10240
    assert cfg.dt == DEFAULT_DT == 1.506e-4
    assert cfg.equilibration_steps == 100_000 and cfg.steps == 1_000_000
    assert cfg.sample_every == 10


def test_transient_preset():
    cfg = parse_config(experiment="transient")
    assert (cfg.surface_kind, cfg.amplitude, cfg.I) == ("four_peak_b", 4.0, 64)
    assert cfg.particle_count == 100_000 and cfg.steps == 50_000
    assert cfg.snapshot_times == (0.47, 0.94, 1.41, 1.88)
    assert parse_config(experiment="potential").v0 == 5.0


@pytest.mark.parametrize("name", EXPERIMENTS)
def test_every_preset_is_valid(name):
    assert parse_config(experiment=name).experiment == name


def test_dt_and_fraction_are_exclusive(tmp_path):
    with pytest.raises(ConfigurationError, match="run.dt"):
        parse_config(_write(tmp_path, "run.dt = 1e-4\nrun.dt_fraction = 0.01\n"))


def test_setting_fraction_clears_preset_dt():
    cfg = parse_config(experiment="equilibrium", overrides={"run.dt_fraction": "0.015625"})
    assert cfg.dt is None and cfg.dt_fraction == 0.015625


def test_setting_per_cell_clears_preset_n():
    cfg = parse_config(experiment="transient", overrides={"particles.per_cell": 3})
    assert cfg.N is None and cfg.particle_count == 3 * 64 * 64


@pytest.mark.parametrize(
    "text,key",
    [
        ("grid.Q = 3", "grid.Q"),
        ("grid.I = 1", "grid.I"),
        ("grid.I = 2.5", "grid.I"),
        ("grid.J = many", "grid.J"),
        ("run.dt_fraction = 1.5", "run.dt_fraction"),
        ("surface.kind = torus", "surface.kind"),
        ("initial.kind = file", "initial.path"),
        ("noise.enabled = maybe", "noise.enabled"),
        ("check.ou_var = 0", "check.ou_var"),
        ("particles.N = none\nparticles.per_cell = none", "particles.N"),
    ],
)
def test_errors_name_the_key(tmp_path, text, key):
    with pytest.raises(ConfigurationError, match=key.replace(".", r"\.")):
        parse_config(_write(tmp_path, text + "\n"))


def test_syntax_errors(tmp_path):
    with pytest.raises(ConfigurationError, match=":2:"):
        parse_config(_write(tmp_path, "grid.I = 8\nnot a pair\n"))
    with pytest.raises(ConfigurationError, match="duplicate"):
        parse_text("a = 1\na = 2\n")
    with pytest.raises(ConfigurationError, match="not found"):
        parse_config(tmp_path / "missing.cfg")


def test_comments_and_blank_lines():
    assert parse_text("# header\n\ngrid.I = 8  # cells\n") == {"grid.I": "8"}


@pytest.mark.parametrize("name", EXPERIMENTS)
def test_manifest_round_trip(tmp_path, name):
    cfg = parse_config(experiment=name, overrides={"run.seed": 99, "initial.radius": math.pi / 7})
    text = format_config(cfg, {"version": "x", "wall_seconds": "1.0"})
    again = parse_config(_write(tmp_path, text))
    assert again == cfg


def test_defaults_are_dataclass_defaults():
    assert ExperimentConfig().tol_ou_var == 0.05
