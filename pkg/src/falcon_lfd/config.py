"""Flat ``key = value`` scenario configuration.

Keys are dotted (``gains.k = 500``).  Values are JSON literals (numbers, lists,
``true``/``false``, quoted strings); anything that does not parse as JSON is
taken as a bare string, which is convenient for paths.  ``#`` starts a comment.
Unknown keys are rejected.
"""

import json
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .controller import Gains
from .dynamics import DynamicParams
from .errors import ConfigError
from .kinematics import KinematicGeometry, workspace_contains
from .plant import PayloadSchedule

DEFAULT_START = (0.005, -0.052, 0.108)
DEFAULT_END = (0.0, 0.05, 0.14)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    duration: float = 7.0
    record_stride: int = 1
    hold: float = 0.0
    velocity: str = "measured"
    max_speed: float = 10.0
    initial_offset: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("sim.dt must be positive")
        if not self.duration > 0:
            raise ConfigError("sim.duration must be positive")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ConfigError("sim.record_stride must be a positive integer")
        if self.hold < 0:
            raise ConfigError("sim.hold must be non-negative")
        if self.hold > 0 and abs(self.hold / self.dt - round(self.hold / self.dt)) > 1e-9:
            raise ConfigError("sim.hold must be a whole multiple of sim.dt")
        if self.velocity not in ("measured", "differentiated"):
            raise ConfigError("sim.velocity must be 'measured' or 'differentiated'")
        if len(self.initial_offset) != 3:
            raise ConfigError("sim.initial_offset needs three components")


@dataclass(frozen=True)
class DemoConfig:
    source: str = "synthetic"
    start: tuple = DEFAULT_START
    end: tuple = DEFAULT_END
    T: float = 7.0
    n: int = 200
    noise: float = 0.0
    seed: int = 0
    p: float = 0.999

    def __post_init__(self):
        if self.source == "synthetic":
            if not self.T > 0:
                raise ConfigError("demo.T must be positive")
            if self.n < 4:
                raise ConfigError("demo.n must be at least 4")
            if self.noise < 0:
                raise ConfigError("demo.noise must be non-negative")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError("demo.p must lie in [0, 1]")


@dataclass(frozen=True)
class PayloadConfig:
    gamma0: float = None
    delta: float = 0.2
    t_on: float = 1.5
    t_off: float = 5.0
    schedule: tuple = None

    def build(self, params):
        if self.schedule is not None:
            return PayloadSchedule(self.schedule)
        g0 = params.m_base / params.m_bar if self.gamma0 is None else self.gamma0
        return PayloadSchedule([(0.0, g0), (self.t_on, g0 + self.delta), (self.t_off, g0)])


@dataclass(frozen=True)
class MetricsConfig:
    settle_factor: float = 2.0
    pre_window: float = 0.5
    v_tol: float = 1e-6


@dataclass(frozen=True)
class ScenarioConfig:
    geometry: KinematicGeometry = field(default_factory=KinematicGeometry)
    dynamics: DynamicParams = field(default_factory=DynamicParams)
    gains: Gains = field(default_factory=Gains)
    payload: PayloadConfig = field(default_factory=PayloadConfig)
    demo: DemoConfig = field(default_factory=DemoConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    out_dir: str = "out"

    @property
    def schedule(self):
        return self.payload.build(self.dynamics)

    def validate(self):
        """Cross-module checks that the dataclasses cannot make on their own."""
        try:
            schedule = self.schedule
        except ValueError as exc:
            raise ConfigError(f"payload: {exc}") from None
        if self.demo.source == "synthetic":
            for name, p in (("demo.start", self.demo.start), ("demo.end", self.demo.end)):
                if not workspace_contains(self.geometry, np.asarray(p, dtype=float)):
                    raise ConfigError(f"{name} {list(p)} is outside the workspace")
        if self.sim.hold > 0 and self.sim.hold < self.sim.dt:
            raise ConfigError("sim.hold must not be shorter than sim.dt")
        return schedule


# section -> (dataclass, {config key: field name})
_SECTIONS = {
    "geometry": (KinematicGeometry, {"L_a": "L_a", "L_b": "L_b", "r_off": "r_off", "phi": "phi"}),
    "dynamics": (
        DynamicParams,
        {k: k for k in ("c_m", "c_I", "c_d", "c_s", "m_base", "phi_off", "g", "m_bar", "eps_s")},
    ),
    "gains": (
        Gains,
        {
            "lambda": "Lambda",
            "K_d": "K_d",
            "k": "k",
            "gamma_hat0": "gamma_hat0",
            "literal_law": "use_paper_literal_law",
            "transpose_torque": "use_transpose_torque",
            "adapt": "adapt",
        },
    ),
    "payload": (PayloadConfig, {f.name: f.name for f in fields(PayloadConfig)}),
    "demo": (DemoConfig, {f.name: f.name for f in fields(DemoConfig)}),
    "sim": (SimConfig, {f.name: f.name for f in fields(SimConfig)}),
    "metrics": (MetricsConfig, {f.name: f.name for f in fields(MetricsConfig)}),
}


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _tupleize(v):
    if isinstance(v, list):
        return tuple(_tupleize(x) for x in v)
    return v


def parse_config_text(text):
    """Return {dotted key: value}; raises ConfigError on syntax problems."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if " #" in value and not value.startswith('"'):
            value = value.split(" #", 1)[0].strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = _parse_value(value)
    return entries


def build_config(entries, base=None):
    """Apply dotted-key overrides to ``base`` (defaults when omitted)."""
    cfg = ScenarioConfig() if base is None else base
    grouped = {}
    for key, value in entries.items():
        if key in ("output.dir", "out_dir"):
            cfg = replace(cfg, out_dir=str(value))
            continue
        section, _, name = key.partition(".")
        if section not in _SECTIONS or name not in _SECTIONS[section][1]:
            raise ConfigError(f"unknown config key {key!r}")
        grouped.setdefault(section, {})[_SECTIONS[section][1][name]] = _tupleize(value)
    for section, overrides in grouped.items():
        try:
            current = getattr(cfg, section)
            if section == "dynamics" and "m_base" in overrides and "m_bar" not in overrides:
                # keep the default m_bar = 2 m_base relationship
                overrides["m_bar"] = None
            cfg = replace(cfg, **{section: replace(current, **overrides)})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{section}: {exc}") from None
    cfg.validate()
    return cfg


def load_config(path, base=None):
    with open(path) as fh:
        return build_config(parse_config_text(fh.read()), base)
