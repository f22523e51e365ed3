"""Experiment configuration: defaults per system, YAML file, environment and flag overrides.

Config files are YAML with optional nested sections; keys inside sections
map onto the same flat field names::

    system: lorenz
    seed: 0
    sweep:
      D_r: [50, 100, 200, 500]
      epsilon: [0.05]
    reservoir:
      rho: 0.4
      beta: 1.0e-6
    hybrid:
      gamma: 0.5
    evaluation:
      tau: 250
      realizations: 32

Precedence (lowest first): system defaults, file, ``HYFC_OUT``, flags.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .dynamics import lyapunov_exponent
from .evaluation import METHODS, EvalConfig
from .reservoir import ReservoirConfig

SECTIONS = ("sweep", "reservoir", "hybrid", "evaluation", "run")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    system: str = "lorenz"
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    D_r: list[int] = field(default_factory=lambda: [50, 100, 200, 500])
    epsilon: list[float] = field(default_factory=lambda: [0.05])
    rho: float = 0.4
    avg_degree: float = 3.0
    sigma: float = 0.15
    dt: float = 0.1
    train_time: float = 100.0
    beta: float = 1e-6
    gamma: float = 0.5
    tau: float = 250.0
    xi: float = 10.0
    gap: float = 10.0
    f: float = 0.4
    realizations: int = 32
    intervals: int = 20
    lambda_max: float | None = None
    seed: int = 0
    jobs: int = 1
    out: str = "results"

    def validate(self) -> "ExperimentConfig":
        if not self.D_r or not self.epsilon or not self.methods:
            raise ConfigError("D_r, epsilon and methods must be nonempty lists")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; expected a subset of {list(METHODS)}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        try:
            for d in self.D_r:
                self.reservoir_config(d)
            self.eval_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if any(e < 0 for e in self.epsilon):
            raise ConfigError("epsilon values must be >= 0")
        if not 0 <= self.gamma <= 1:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}")
        return self

    def reservoir_config(self, D_r: int, seed: int = 0) -> ReservoirConfig:
        return ReservoirConfig(D_r=D_r, rho=self.rho, avg_degree=self.avg_degree, sigma=self.sigma,
                               dt=self.dt, T=self.train_time, beta=self.beta, xi=self.xi, seed=seed)

    def eval_config(self) -> EvalConfig:
        lam = lyapunov_exponent(self.system) if self.lambda_max is None else self.lambda_max
        return EvalConfig(self.f, self.tau, self.intervals, self.realizations, lam, self.xi, self.gap)

    def to_dict(self) -> dict:
        return asdict(self)


SYSTEM_DEFAULTS = {
    "lorenz": dict(rho=0.4, avg_degree=3.0, sigma=0.15, dt=0.1, train_time=100.0, gamma=0.5,
                   tau=250.0, xi=10.0, D_r=[50, 100, 200, 500], epsilon=[0.05]),
    "ks": dict(rho=0.4, avg_degree=3.0, sigma=1.0, dt=0.25, train_time=5000.0, gamma=0.5,
               tau=250.0, xi=10.0, D_r=[500], epsilon=[0.1]),
}

_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_LIST_ITEM = {"methods": str, "D_r": int, "epsilon": float}
_SCALAR = {"system": str, "out": str, "seed": int, "jobs": int, "realizations": int,
           "intervals": int, "lambda_max": float}


def _coerce(key, value):
    if key in _LIST_ITEM:
        typ = _LIST_ITEM[key]
        items = value if isinstance(value, (list, tuple)) else [value]
        return [_coerce_scalar(key, v, typ) for v in items]
    if value is None and key == "lambda_max":
        return None
    return _coerce_scalar(key, value, _SCALAR.get(key, float))


def _coerce_scalar(key, value, typ):
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected str, got {type(value).__name__} ({value!r})")
        return value
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected {typ.__name__}, got bool ({value!r})")
    if typ is int:
        if isinstance(value, int) or (isinstance(value, float) and value.is_integer()):
            return int(value)
        raise ConfigError(f"{key}: expected int, got {type(value).__name__} ({value!r})")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        # YAML 1.1 reads "1e-6" as a string
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigError(f"{key}: expected float, got {type(value).__name__} ({value!r})")


def flatten_config(data: dict) -> dict:
    """Flatten the optional sections into one key space, rejecting unknown keys."""
    flat = {}
    for key, value in (data or {}).items():
        if key in SECTIONS and isinstance(value, dict):
            for sub, v in value.items():
                _put(flat, sub, v, f"{key}.{sub}")
        else:
            _put(flat, key, value, key)
    return flat


def _put(flat, key, value, where):
    name = key.replace("-", "_")
    name = {"T": "train_time", "dr": "D_r"}.get(name, name)
    if name not in _FIELDS:
        raise ConfigError(f"unknown key {where!r}")
    flat[name] = _coerce(name, value)


def parse_config(path=None, overrides: dict | None = None, env=None) -> ExperimentConfig:
    """Merge defaults, an optional YAML file, ``HYFC_OUT`` and explicit overrides."""
    env = os.environ if env is None else env
    file_values = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            loaded = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        file_values = flatten_config(loaded)
    flag_values = flatten_config({k: v for k, v in (overrides or {}).items() if v is not None})
    system = flag_values.get("system", file_values.get("system", "lorenz"))
    if system not in SYSTEM_DEFAULTS:
        raise ConfigError(f"unknown system {system!r}; expected one of {sorted(SYSTEM_DEFAULTS)}")
    merged = {**SYSTEM_DEFAULTS[system], **file_values}
    if env.get("HYFC_OUT"):
        merged["out"] = env["HYFC_OUT"]
    merged.update(flag_values)
    merged["system"] = system
    return ExperimentConfig(**merged).validate()
