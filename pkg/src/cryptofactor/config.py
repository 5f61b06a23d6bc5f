"""Pipeline configuration: one JSON document, command-line flags override."""

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .econometrics import SE_TYPES
from .errors import ConfigError
from .factors import WEEKDAYS
from .riskmodel import DOF_OLS, DOF_POPULATION

# excluded from the provenance block: they do not change any result
_NOT_PROVENANCE = ("output_dir", "threads", "base_dir")


@dataclass
class PipelineConfig:
    prices: str = "prices.csv"
    meta: str = "meta.csv"
    followers: str = "followers.csv"
    riskfree: str = "riskfree.csv"
    truth: str = ""
    output_dir: str = "out"
    mcap_floor: float = 1_000_000.0
    min_years: int = 3
    min_obs: int = 10
    max_gap_days: int = 7
    week_anchor: str = "MON"
    min_coins: int = 10
    ivol_dof: str = DOF_POPULATION
    dib_mode: str = "raw"
    dib_scale: float = 1.0
    se_type: str = "homoskedastic"
    winsorize: bool = False
    winsor_limits: tuple = (0.01, 0.99)
    threads: int = 1
    seed: int = 7
    synth: dict = field(default_factory=dict)
    base_dir: str = "."

    def validate(self):
        if not self.mcap_floor > 0:
            raise ConfigError("mcap_floor must be positive")
        if self.min_years < 0 or self.min_obs < 2 or self.max_gap_days < 1:
            raise ConfigError("min_years >= 0, min_obs >= 2 and max_gap_days >= 1 required")
        if self.week_anchor.upper() not in WEEKDAYS:
            raise ConfigError(f"week_anchor must be one of {sorted(WEEKDAYS)}")
        if self.ivol_dof not in (DOF_POPULATION, DOF_OLS):
            raise ConfigError("ivol_dof must be 'population' or 'ols'")
        if self.dib_mode not in ("raw", "log"):
            raise ConfigError("dib_mode must be 'raw' or 'log'")
        if not self.dib_scale > 0:
            raise ConfigError("dib_scale must be positive")
        if self.se_type not in SE_TYPES:
            raise ConfigError(f"se_type must be one of {SE_TYPES}")
        lo, hi = self.winsor_limits
        if not 0 <= lo < hi <= 1:
            raise ConfigError("winsor_limits must satisfy 0 <= lower < upper <= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self

    def path(self, name):
        value = getattr(self, name)
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def out(self):
        return self.path("output_dir")

    def provenance(self):
        data = {k: v for k, v in asdict(self).items() if k not in _NOT_PROVENANCE}
        data["winsor_limits"] = list(self.winsor_limits)
        return json.dumps(data, sort_keys=True)


def load_config(path=None, **overrides):
    """Build a config from an optional JSON file plus keyword overrides.

    Relative paths in the file are resolved against the file's directory.
    ``None`` overrides are ignored.
    """
    data = {}
    base = "."
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{p}: top level must be an object")
        base = str(p.parent)
    known = {f.name for f in fields(PipelineConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    data.setdefault("base_dir", base)
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    if "winsor_limits" in data:
        data["winsor_limits"] = tuple(data["winsor_limits"])
    try:
        cfg = PipelineConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()
