"""Run configuration: defaults < config file < ``CONGREC_*`` env vars < CLI flags.

The config file is flat ``key = value`` text; ``#`` starts a comment. Lists
are comma separated. Unknown keys are rejected.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigurationError
from .factorization import TrainConfig

ENV_PREFIX = "CONGREC_"


@dataclass(frozen=True)
class RunConfig:
    # inputs / outputs
    ratings: str = ""
    trust: str = ""
    helpfulness: str = ""
    out_dir: str = "out"
    model: str = ""
    report: bool = False
    # model
    variant: str = "cr"
    d: int = 15
    lam: float = 0.01
    gamma: float = 100.0
    delta: float = 0.3
    learning_rate: float = 1e-4
    max_iters: int = 500
    tol: float = 1e-5
    init_scale: float = 0.1
    gradient_mode: str = "full"
    clamp_predictions: bool = False
    clamp_closeness_nonnegative: bool = False
    # protocol
    train_fraction: float = 0.9
    fractions: tuple = (0.9,)
    methods: tuple = ("mf", "smf", "soreg", "cr", "csrr")
    runs: int = 20
    base_seed: int = 0
    jobs: int = 1
    exclude_cold_start: bool = False
    alpha: float = 0.01
    # congruity
    positive_scores: tuple = (4, 5)
    negative_scores: tuple = (1, 2)
    g_variant: str = "clamped"
    log_base: float = math.e
    # synthetic generator
    synth_n: int = 200
    synth_m: int = 150
    synth_d: int = 5
    congruity_density: float = 0.1
    friend_density: float = 0.015
    noise_sigma: float = 0.3

    def train_config(self, seed=0) -> TrainConfig:
        return TrainConfig(
            d=self.d, lam=self.lam, gamma=self.gamma, delta=self.delta,
            learning_rate=self.learning_rate, max_iters=self.max_iters, tol=self.tol,
            seed=seed, init_scale=self.init_scale, gradient_mode=self.gradient_mode,
            clamp_predictions=self.clamp_predictions,
            clamp_closeness_nonnegative=self.clamp_closeness_nonnegative,
        )

    def to_text(self) -> str:
        return "".join(f"{f.name} = {format_value(getattr(self, f.name))}\n" for f in fields(self))


FIELDS = {f.name: f for f in fields(RunConfig)}
_DEFAULTS = RunConfig()
_LIST_ITEM = {"fractions": float, "methods": str, "positive_scores": int, "negative_scores": int}


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_value(key, text):
    """Parse the string form of config ``key``."""
    if key not in FIELDS:
        raise ConfigurationError(f"unknown config key {key!r}")
    default = getattr(_DEFAULTS, key)
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, tuple):
            conv = _LIST_ITEM[key]
            return tuple(conv(x.strip()) for x in text.split(",") if x.strip())
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError:
        raise ConfigurationError(f"bad value for {key}: {text!r}") from None


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    out = {}
    for no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in FIELDS:
            raise ConfigurationError(f"{path}:{no}: unknown config key {key!r}")
        out[key] = parse_value(key, value)
    return out


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for key in FIELDS:
        name = ENV_PREFIX + key.upper()
        if name in environ:
            out[key] = parse_value(key, environ[name])
    return out


def resolve(config_file=None, flags=None, environ=None) -> RunConfig:
    """Merge the layers; ``flags`` maps keys to already-parsed values (None = unset)."""
    values = {}
    if config_file:
        values.update(read_config_file(config_file))
    values.update(env_overrides(environ))
    for k, v in (flags or {}).items():
        if v is None:
            continue
        if k not in FIELDS:
            raise ConfigurationError(f"unknown config key {k!r}")
        values[k] = v
    return replace(_DEFAULTS, **values)


def parse_text(text) -> RunConfig:
    values = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = parse_value(key, value)
    return replace(_DEFAULTS, **values)
