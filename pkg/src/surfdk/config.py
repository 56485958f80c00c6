"""
Experiment configuration
========================

Configurations are flat ``key = value`` text files, one entry per line, with
``#`` comments.  Keys are dotted paths (``surface.kind``, ``run.dt``...).
Every experiment starts from its own preset and the file and command-line
overrides are layered on top.  The resolved configuration is written back out
in the same format as the run manifest, with extra ``manifest.*`` lines that
the parser accepts and ignores.

Recognised keys::

    experiment               equilibrium | transient | potential | fdr-check | particles | estimate-dt
    surface.kind             sinusoidal_a | four_peak_b | flat
    surface.amplitude        float >= 0
    grid.I, grid.J           int >= 2
    particles.N              int >= 1
    particles.per_cell       int >= 0 (particle initialisation; N = per_cell * I * J)
    particles.seed           int (defaults to run.seed)
    particles.enabled        bool, also run the particle chain
    potential.v0             float
    run.dt                   float > 0          (exclusive with run.dt_fraction)
    run.dt_fraction          float in (0, 1]    (fraction of the estimated stability limit)
    run.steps                int >= 0
    run.equilibration_steps  int >= 0
    run.seed                 int
    run.snapshot_times       comma separated times
    noise.enabled            bool
    initial.kind             uniform_nu | disk | file
    initial.center_x, initial.center_y, initial.radius   floats (disk)
    initial.normalization    nu | lebesgue (disk)
    initial.path             path to a snapshot CSV (file)
    output.dir               run directory ('' for none)
    output.sample_every      int >= 1
    check.mean_rho, check.var_rho, check.poisson, check.ou_var   relative tolerances
"""

from dataclasses import dataclass, fields
import math
import os

from .exceptions import ConfigurationError

__all__ = [
    "ExperimentConfig",
    "PRESETS",
    "parse_config",
    "parse_text",
    "format_config",
    "EXPERIMENTS",
]

EXPERIMENTS = ("equilibrium", "transient", "potential", "fdr-check", "particles", "estimate-dt")
DEFAULT_DT = 1.506e-4


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _times(text):
    if isinstance(text, (tuple, list)):
        return tuple(float(t) for t in text)
    text = str(text).strip()
    return tuple(float(t) for t in text.split(",") if t.strip()) if text else ()


def _opt_float(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return float(text)


def _opt_int(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return int(text)


# key -> (attribute, parser)
SCHEMA = {
    "experiment": ("experiment", str),
    "surface.kind": ("surface_kind", str),
    "surface.amplitude": ("amplitude", float),
    "grid.I": ("I", int),
    "grid.J": ("J", int),
    "particles.N": ("N", _opt_int),
    "particles.per_cell": ("per_cell", _opt_int),
    "particles.seed": ("particle_seed", _opt_int),
    "particles.enabled": ("particles_enabled", _bool),
    "potential.v0": ("v0", float),
    "run.dt": ("dt", _opt_float),
    "run.dt_fraction": ("dt_fraction", _opt_float),
    "run.steps": ("steps", int),
    "run.equilibration_steps": ("equilibration_steps", int),
    "run.seed": ("seed", int),
    "run.replicas": ("replicas", int),
    "run.snapshot_times": ("snapshot_times", _times),
    "noise.enabled": ("noise", _bool),
    "initial.kind": ("initial_kind", str),
    "initial.center_x": ("center_x", float),
    "initial.center_y": ("center_y", float),
    "initial.radius": ("radius", float),
    "initial.normalization": ("normalization", str),
    "initial.path": ("initial_path", str),
    "output.dir": ("output_dir", str),
    "output.sample_every": ("sample_every", int),
    "output.snapshot_every": ("snapshot_every", int),
    "check.mean_rho": ("tol_mean_rho", float),
    "check.var_rho": ("tol_var_rho", float),
    "check.poisson": ("tol_poisson", float),
    "check.ou_var": ("tol_ou_var", float),
}
ATTR_TO_KEY = {attr: key for key, (attr, _) in SCHEMA.items()}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment parameters; build with :func:`parse_config`."""

    experiment: str = "equilibrium"
    surface_kind: str = "sinusoidal_a"
    amplitude: float = 3.0
    I: int = 32
    J: int = 32
    N: int = None
    per_cell: int = None
    particle_seed: int = None
    particles_enabled: bool = False
    v0: float = 0.0
    dt: float = None
    dt_fraction: float = None
    steps: int = 1_000_000
    equilibration_steps: int = 100_000
    seed: int = 12345
    replicas: int = 1
    snapshot_times: tuple = ()
    noise: bool = True
    initial_kind: str = "uniform_nu"
    center_x: float = math.pi
    center_y: float = math.pi
    radius: float = 0.2 * math.pi
    normalization: str = "nu"
    initial_path: str = ""
    output_dir: str = ""
    sample_every: int = 10
    snapshot_every: int = 0
    tol_mean_rho: float = 0.02
    tol_var_rho: float = 0.10
    tol_poisson: float = 0.10
    tol_ou_var: float = 0.05

    def as_dict(self):
        return {ATTR_TO_KEY[f.name]: getattr(self, f.name) for f in fields(self)}

    @property
    def particle_count(self):
        if self.N is not None:
            return self.N
        return self.per_cell * self.I * self.J

    @property
    def noise_seed(self):
        return self.seed

    @property
    def particles_seed(self):
        return self.seed if self.particle_seed is None else self.particle_seed


_EQUILIBRIUM = {
    "surface.kind": "sinusoidal_a",
    "surface.amplitude": 3.0,
    "grid.I": 32,
    "grid.J": 32,
    "particles.per_cell": 10,
    "run.dt": DEFAULT_DT,
    "run.equilibration_steps": 100_000,
    "run.steps": 1_000_000,
    "output.sample_every": 10,
    "initial.kind": "uniform_nu",
}
_TRANSIENT = {
    "surface.kind": "four_peak_b",
    "surface.amplitude": 4.0,
    "grid.I": 64,
    "grid.J": 64,
    "particles.N": 100_000,
    "run.dt": DEFAULT_DT,
    "run.equilibration_steps": 0,
    "run.steps": 50_000,
    "run.snapshot_times": (0.47, 0.94, 1.41, 1.88),
    "initial.kind": "disk",
    "initial.normalization": "nu",
    "output.sample_every": 1000,
}
PRESETS = {
    "equilibrium": _EQUILIBRIUM,
    "particles": dict(_EQUILIBRIUM, **{"particles.enabled": True}),
    "transient": _TRANSIENT,
    "potential": dict(_TRANSIENT, **{"potential.v0": 5.0}),
    "fdr-check": {
        "surface.kind": "flat",
        "surface.amplitude": 0.0,
        "grid.I": 16,
        "grid.J": 16,
        "particles.N": 2560,
        "run.dt": None,
        "run.dt_fraction": 1.5625e-2,
        "run.equilibration_steps": 0,
        "run.steps": 2000,
        "run.replicas": 1024,
        "output.sample_every": 20,
    },
    "estimate-dt": dict(_EQUILIBRIUM),
}


def parse_text(text, source="<text>"):
    """Parse ``key = value`` lines into a ``{key: raw string}`` dict."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in out:
            raise ConfigurationError(f"{source}:{lineno}: duplicate key {key}")
        out[key] = value
    return out


def _convert(key, value):
    if key not in SCHEMA:
        raise ConfigurationError(f"{key}: unknown configuration key")
    attr, parser = SCHEMA[key]
    if value is None:
        return attr, None
    try:
        if parser in (_opt_int, int) and isinstance(value, float) and not value.is_integer():
            raise ValueError("expected an integer")
        return attr, parser(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{key}: cannot parse {value!r} ({exc})") from None


def _validate(cfg, explicit):
    def fail(key, msg):
        raise ConfigurationError(f"{key}: {msg}")

    if cfg.experiment not in EXPERIMENTS:
        fail("experiment", f"unknown experiment {cfg.experiment!r}")
    if cfg.surface_kind not in ("sinusoidal_a", "four_peak_b", "flat"):
        fail("surface.kind", f"unknown surface kind {cfg.surface_kind!r}")
    if cfg.amplitude < 0:
        fail("surface.amplitude", "must be >= 0")
    for key, v in (("grid.I", cfg.I), ("grid.J", cfg.J)):
        if v < 2:
            fail(key, "must be >= 2")
    if "run.dt" in explicit and "run.dt_fraction" in explicit and cfg.dt is not None and cfg.dt_fraction is not None:
        fail("run.dt", "run.dt and run.dt_fraction are mutually exclusive")
    if cfg.dt is None and cfg.dt_fraction is None:
        fail("run.dt", "one of run.dt or run.dt_fraction is required")
    if cfg.dt is not None and not cfg.dt > 0:
        fail("run.dt", "must be > 0")
    if cfg.dt_fraction is not None and not 0 < cfg.dt_fraction <= 1:
        fail("run.dt_fraction", "must lie in (0, 1]")
    if cfg.N is None and cfg.per_cell is None:
        fail("particles.N", "one of particles.N or particles.per_cell is required")
    if cfg.N is not None and cfg.N < 1:
        fail("particles.N", "must be >= 1")
    if cfg.per_cell is not None and cfg.per_cell < 0:
        fail("particles.per_cell", "must be >= 0")
    if cfg.particle_count < 1:
        fail("particles.N", "particle count must be >= 1")
    for key, v in (("run.steps", cfg.steps), ("run.equilibration_steps", cfg.equilibration_steps)):
        if v < 0:
            fail(key, "must be >= 0")
    if cfg.replicas < 1:
        fail("run.replicas", "must be >= 1")
    if cfg.snapshot_every < 0:
        fail("output.snapshot_every", "must be >= 0")
    if cfg.sample_every < 1:
        fail("output.sample_every", "must be >= 1")
    if any(t < 0 for t in cfg.snapshot_times):
        fail("run.snapshot_times", "times must be >= 0")
    if cfg.initial_kind not in ("uniform_nu", "disk", "file"):
        fail("initial.kind", f"unknown initial condition {cfg.initial_kind!r}")
    if cfg.initial_kind == "disk" and not cfg.radius > 0:
        fail("initial.radius", "must be > 0")
    if cfg.normalization not in ("nu", "lebesgue"):
        fail("initial.normalization", "must be 'nu' or 'lebesgue'")
    if cfg.initial_kind == "file" and not cfg.initial_path:
        fail("initial.path", "required for initial.kind = file")
    for key in ("check.mean_rho", "check.var_rho", "check.poisson", "check.ou_var"):
        attr = SCHEMA[key][0]
        if not getattr(cfg, attr) > 0:
            fail(key, "must be > 0")


def parse_config(path=None, experiment=None, overrides=None):
    """Resolve a configuration from preset, file and overrides (in that order).

    ``overrides`` maps dotted keys to strings or already typed values; an
    override value of ``None`` leaves the key unchanged.  Setting one of
    ``run.dt`` / ``run.dt_fraction`` clears the other unless both are given
    explicitly, which is an error.
    """
    entries = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigurationError(f"config file not found: {path}")
        with open(path) as fh:
            entries.update(parse_text(fh.read(), source=str(path)))
    entries = {k: v for k, v in entries.items() if not k.startswith("manifest.")}
    for k, v in (overrides or {}).items():
        if v is not None:
            entries[k] = v

    name = experiment or entries.get("experiment") or "equilibrium"
    if name not in EXPERIMENTS:
        raise ConfigurationError(f"experiment: unknown experiment {name!r}")
    entries["experiment"] = name

    values = {}
    for key, raw in PRESETS[name].items():
        attr, val = _convert(key, raw)
        values[attr] = val
    explicit = set()
    for key, raw in entries.items():
        attr, val = _convert(key, raw)
        values[attr] = val
        explicit.add(key)
    if "run.dt" in explicit and "run.dt_fraction" not in explicit:
        values["dt_fraction"] = None
    if "run.dt_fraction" in explicit and "run.dt" not in explicit:
        values["dt"] = None
    if "particles.N" in explicit and "particles.per_cell" not in explicit:
        values["per_cell"] = None
    if "particles.per_cell" in explicit and "particles.N" not in explicit:
        values["N"] = None

    cfg = ExperimentConfig(**values)
    _validate(cfg, explicit)
    return cfg


def _format_value(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(t)) for t in v)
    return str(v)


def format_config(cfg, metadata=None):
    """Render ``cfg`` (and optional ``manifest.*`` metadata) as config text."""
    lines = [f"{key} = {_format_value(val)}" for key, val in cfg.as_dict().items()]
    for key, val in (metadata or {}).items():
        lines.append(f"manifest.{key} = {val}")
    return "\n".join(lines) + "\n"
