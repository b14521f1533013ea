"""Experiment configuration: flat ``key = value`` files and built-in profiles.

Format::

    # comment
    system.M = 8
    system.P_T = 30 dBm          # or plain watts
    system.gamma = 10 dB         # or linear, comma list for per-user values
    system.theta_prior = 29, 31  # degrees unless suffixed 'rad'
    solver.bcd_tol = 1e-7
    experiment.pfa_grid = 0.05, 0.1, 0.2, 0.5

Powers accept ``dBm``/``dBW``/``W``/``mW`` suffixes and are stored in
watts; ratios accept ``dB``; frequencies accept ``Hz``/``kHz``/``MHz``;
angles are degrees unless suffixed ``rad``. A file starting from a
profile may set ``profile = desk`` (or pass ``profile=`` to
:func:`load_config`); its own keys then override the profile's.
"""

import dataclasses
import math
import re
from dataclasses import dataclass, field

from ..signal_model import SystemConfig, normalized_delay
from ..solver import SolverOptions

EXPERIMENTS = ("roc", "sweep", "solve", "validate")
SCHEMES = ("proposed", "wosi", "wisi")


class ConfigError(ValueError):
    """Bad configuration; carries the offending key and line when known."""

    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything an experiment run needs.

    ``distance_grid`` is used by sweeps, ``pfa_grid`` by ROC runs. The
    detector fields choose the DoA grid (``roc_grid``: ``"point"`` probes
    only the true angle, ``"prior"`` scans the prior interval), whether to
    calibrate thresholds empirically from H0 draws, and the sweep P_FA.
    """

    experiment: str = "roc"
    config: SystemConfig = field(default_factory=SystemConfig)
    solver: SolverOptions = field(default_factory=SolverOptions)
    schemes: tuple = SCHEMES
    trials: int = 10
    mc_glrt_trials: int = 2000
    pfa_grid: tuple = (0.05, 0.1, 0.2, 0.5)
    distance_grid: tuple = (200.0, 500.0, 1000.0)
    seed: int = 0
    output_path: str = "results.csv"
    sweep_pfa: float = 0.1
    grid_step: float = math.radians(0.05)
    refine: bool = True
    roc_grid: str = "point"
    calibrate: bool = False
    h0: bool = False
    noiseless: bool = False
    draw_theta: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}", key="experiment")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ConfigError(f"unknown or empty schemes {self.schemes!r}", key="experiment.schemes")
        if len(set(self.schemes)) != len(self.schemes):
            raise ConfigError("duplicate scheme", key="experiment.schemes")
        if self.trials < 1 or self.mc_glrt_trials < 1:
            raise ConfigError("trials must be at least 1", key="experiment.trials")
        for name in ("pfa_grid", "distance_grid"):
            grid = getattr(self, name)
            if len(grid) == 0:
                raise ConfigError("grid is empty", key=f"experiment.{name}")
            if list(grid) != sorted(grid) or len(set(grid)) != len(grid):
                raise ConfigError("grid must be strictly ascending", key=f"experiment.{name}")
        if not all(0.0 < p < 1.0 for p in self.pfa_grid):
            raise ConfigError("P_FA values must lie in (0, 1)", key="experiment.pfa_grid")
        if not 0.0 < self.sweep_pfa < 1.0:
            raise ConfigError("P_FA must lie in (0, 1)", key="experiment.sweep_pfa")
        if not all(d > 0 for d in self.distance_grid):
            raise ConfigError("distances must be positive", key="experiment.distance_grid")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", key="experiment.seed")
        if self.roc_grid not in ("point", "prior"):
            raise ConfigError(f"unknown roc_grid {self.roc_grid!r}", key="detector.roc_grid")
        if not self.grid_step > 0:
            raise ConfigError("grid step must be positive", key="detector.grid_step")

    def with_(self, **changes):
        return dataclasses.replace(self, **changes)

    def check_distances(self):
        """Map every sweep distance to its delay; fails before any compute."""
        out = []
        for d in self.distance_grid:
            try:
                out.append(normalized_delay(d, self.config))
            except ValueError as exc:
                raise ConfigError(str(exc), key="experiment.distance_grid") from exc
        return out

    def echo(self):
        """JSON-friendly dump of the spec."""
        def conv(v):
            if isinstance(v, tuple):
                return [conv(x) for x in v]
            return v
        d = {k: conv(v) for k, v in dataclasses.asdict(self).items()
             if k not in ("config", "solver")}
        d["config"] = {k: conv(v) for k, v in dataclasses.asdict(self.config).items()}
        d["solver"] = dataclasses.asdict(self.solver)
        return d


# ---------------------------------------------------------------- parsing

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_NUM_UNIT = re.compile(rf"^\s*({_NUM})\s*([A-Za-z]*)\s*$")


def _split_unit(text):
    m = _NUM_UNIT.match(text)
    if not m:
        raise ValueError(f"not a number: {text!r}")
    return float(m.group(1)), m.group(2)


def _plain(text):
    value, unit = _split_unit(text)
    if unit:
        raise ValueError(f"unexpected unit {unit!r}")
    return value


def _int(text):
    value = _plain(text)
    if value != int(value):
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def _power(text):
    value, unit = _split_unit(text)
    u = unit.lower()
    if u in ("", "w"):
        return value
    if u == "mw":
        return value * 1e-3
    if u == "dbm":
        return 10.0 ** ((value - 30.0) / 10.0)
    if u == "dbw":
        return 10.0 ** (value / 10.0)
    raise ValueError(f"unknown power unit {unit!r}")


def _ratio(text):
    value, unit = _split_unit(text)
    if unit == "":
        return value
    if unit.lower() == "db":
        return 10.0 ** (value / 10.0)
    raise ValueError(f"unknown ratio unit {unit!r}")


def _freq(text):
    value, unit = _split_unit(text)
    scale = {"": 1.0, "hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}.get(unit.lower())
    if scale is None:
        raise ValueError(f"unknown frequency unit {unit!r}")
    return value * scale


def _length(text):
    value, unit = _split_unit(text)
    scale = {"": 1.0, "m": 1.0, "km": 1e3}.get(unit.lower())
    if scale is None:
        raise ValueError(f"unknown length unit {unit!r}")
    return value * scale


def _angle(text):
    value, unit = _split_unit(text)
    if unit.lower() in ("", "deg"):
        return math.radians(value)
    if unit.lower() == "rad":
        return value
    raise ValueError(f"unknown angle unit {unit!r}")


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _word(text):
    t = text.strip()
    if not re.fullmatch(r"[A-Za-z0-9_.\-/]+", t):
        raise ValueError(f"bad token {text!r}")
    return t


def _list(parse):
    def inner(text):
        items = [x for x in text.split(",") if x.strip()]
        if not items:
            raise ValueError("empty list")
        return tuple(parse(x) for x in items)
    return inner


def _seed(text):
    value = int(text.strip(), 0)
    if not 0 <= value < 2**64:
        raise ValueError("seed must fit in 64 bits")
    return value


# key -> (target, field, parser); target is "system", "solver" or "spec"
SCHEMA = {
    "system.M": ("system", "M", _int),
    "system.K": ("system", "K", _int),
    "system.N": ("system", "N", _int),
    "system.delta_f": ("system", "delta_f", _freq),
    "system.P_T": ("system", "P_T", _power),
    "system.sigma_c2": ("system", "sigma_c2", _power),
    "system.sigma_s2": ("system", "sigma_s2", _power),
    "system.sigma_si2": ("system", "sigma_si2", _power),
    "system.gamma": ("system", "gamma", _list(_ratio)),
    "system.phi": ("system", "phi", _angle),
    "system.C0_db": ("system", "C0_db", _plain),
    "system.c0_convention": ("system", "c0_convention", _word),
    "system.alpha": ("system", "alpha", _plain),
    "system.d_t": ("system", "d_t", _length),
    "system.theta_true": ("system", "theta_true", _angle),
    "system.theta_prior": ("system", "theta_prior", _list(_angle)),
    "system.user_radius": ("system", "user_radius", _length),
    "system.v_c": ("system", "v_c", _plain),
    "system.antenna_spacing_ratio": ("system", "antenna_spacing_ratio", _plain),
    "system.channel_model": ("system", "channel_model", _word),
    "system.tdl_taps": ("system", "tdl_taps", _int),
    "system.tdl_decay": ("system", "tdl_decay", _plain),
    "system.beta_random_phase": ("system", "beta_random_phase", _bool),
    "solver.varrho0": ("solver", "varrho0", _plain),
    "solver.c_varrho": ("solver", "c_varrho", _plain),
    "solver.eps_p": ("solver", "eps_p", _plain),
    "solver.max_outer": ("solver", "max_outer", _int),
    "solver.bcd_tol": ("solver", "bcd_tol", _plain),
    "solver.max_bcd": ("solver", "max_bcd", _int),
    "solver.eta_tol": ("solver", "eta_tol", _plain),
    "solver.init_mode": ("solver", "init_mode", _word),
    "experiment.type": ("spec", "experiment", _word),
    "experiment.schemes": ("spec", "schemes", _list(_word)),
    "experiment.trials": ("spec", "trials", _int),
    "experiment.mc_glrt_trials": ("spec", "mc_glrt_trials", _int),
    "experiment.pfa_grid": ("spec", "pfa_grid", _list(_plain)),
    "experiment.distance_grid": ("spec", "distance_grid", _list(_length)),
    "experiment.seed": ("spec", "seed", _seed),
    "experiment.output_path": ("spec", "output_path", str.strip),
    "experiment.sweep_pfa": ("spec", "sweep_pfa", _plain),
    "experiment.h0": ("spec", "h0", _bool),
    "experiment.noiseless": ("spec", "noiseless", _bool),
    "experiment.draw_theta": ("spec", "draw_theta", _bool),
    "detector.grid_step": ("spec", "grid_step", _angle),
    "detector.refine": ("spec", "refine", _bool),
    "detector.roc_grid": ("spec", "roc_grid", _word),
    "detector.calibrate": ("spec", "calibrate", _bool),
}


PROFILES = {
    # parameter list of the reference scenario
    "reference": """
        system.M = 32
        system.K = 8
        system.N = 256
        system.delta_f = 120 kHz
        system.P_T = 30 dBm
        system.sigma_c2 = -90 dBm
        system.sigma_s2 = -90 dBm
        system.sigma_si2 = -80 dBm
        system.gamma = 10 dB
        system.phi = 45
        system.C0_db = 20
        system.alpha = 2
        system.d_t = 1000
        system.theta_true = 30
        system.theta_prior = 29, 31
        system.user_radius = 100
        experiment.trials = 100
        experiment.mc_glrt_trials = 10000
        experiment.pfa_grid = 0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9
        experiment.distance_grid = 200, 400, 600, 800, 1000
    """,
    # reduced scale; the smaller cell keeps every instance feasible and
    # C0 is raised so the echo is detectable at 1 km
    "desk": """
        system.M = 8
        system.K = 2
        system.N = 32
        system.delta_f = 120 kHz
        system.P_T = 30 dBm
        system.sigma_c2 = -90 dBm
        system.sigma_s2 = -90 dBm
        system.sigma_si2 = -80 dBm
        system.gamma = 10 dB
        system.phi = 45
        system.C0_db = 54
        system.alpha = 2
        system.d_t = 1000
        system.theta_true = 30
        system.theta_prior = 29, 31
        system.user_radius = 50
        experiment.trials = 10
        experiment.mc_glrt_trials = 2000
        experiment.pfa_grid = 0.05, 0.1, 0.2, 0.5
        experiment.distance_grid = 200, 500, 1000
    """,
}


def parse_text(text, source="<config>"):
    """Parse ``key = value`` lines into an ordered list of (key, raw, line)."""
    entries = []
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value' in {source}", line=lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(f"missing key in {source}", line=lineno)
        if key in seen:
            raise ConfigError(f"duplicate key (first on line {seen[key]})", key=key, line=lineno)
        seen[key] = lineno
        entries.append((key, value, lineno))
    return entries


def _apply(entries, fields):
    for key, value, lineno in entries:
        if key == "profile":
            continue
        if key not in SCHEMA:
            raise ConfigError("unknown key", key=key, line=lineno)
        target, name, parse = SCHEMA[key]
        try:
            fields[target][name] = parse(value)
        except ValueError as exc:
            raise ConfigError(f"cannot parse {value!r}: {exc}", key=key, line=lineno) from exc
        fields["_lines"][(target, name)] = (key, lineno)


def _build(fields):
    lines = fields["_lines"]
    try:
        config = SystemConfig(**fields["system"])
    except (TypeError, ValueError) as exc:
        key, line = _blame(str(exc), lines, "system")
        raise ConfigError(f"invalid system parameters: {exc}", key=key, line=line) from exc
    try:
        solver = SolverOptions(**fields["solver"])
    except (TypeError, ValueError) as exc:
        key, line = _blame(str(exc), lines, "solver")
        raise ConfigError(f"invalid solver options: {exc}", key=key, line=line) from exc
    try:
        return ExperimentSpec(config=config, solver=solver, **fields["spec"])
    except ConfigError as exc:
        hit = [v for v in lines.values() if v[0] == exc.key]
        if hit and exc.line is None:
            raise ConfigError(str(exc).split(" (")[0], key=exc.key, line=hit[0][1]) from exc
        raise


def _blame(message, lines, target):
    """Best guess at which key caused a constructor error.

    The field named earliest in the message wins.
    """
    best = None
    for (t, name), (key, line) in lines.items():
        m = re.search(rf"\b{re.escape(name)}\b", message)
        if t == target and m and (best is None or m.start() < best[0]):
            best = (m.start(), key, line)
    return (best[1], best[2]) if best else (None, None)


def profile_spec(name="desk", **overrides):
    """Spec built from a named profile; ``overrides`` are spec fields."""
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}", key="profile")
    fields = {"system": {}, "solver": {}, "spec": {}, "_lines": {}}
    _apply(parse_text(PROFILES[name], f"profile {name}"), fields)
    spec = _build(fields)
    return spec.with_(**overrides) if overrides else spec


def loads_config(text, profile=None, source="<config>"):
    """Parse configuration text into a validated :class:`ExperimentSpec`."""
    entries = parse_text(text, source)
    file_profile = [v for k, v, _ in entries if k == "profile"]
    name = file_profile[0] if file_profile else profile
    fields = {"system": {}, "solver": {}, "spec": {}, "_lines": {}}
    if name is not None:
        if name not in PROFILES:
            line = [ln for k, _, ln in entries if k == "profile"]
            raise ConfigError(f"unknown profile {name!r}", key="profile",
                              line=line[0] if line else None)
        _apply(parse_text(PROFILES[name], f"profile {name}"), fields)
        fields["_lines"] = {}
    _apply(entries, fields)
    return _build(fields)


def load_config(path, profile=None):
    """Read and validate a configuration file.

    Raises
    ------
    ConfigError
        Unreadable file, parse failure, unknown key or invariant violation.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return loads_config(text, profile=profile, source=str(path))
