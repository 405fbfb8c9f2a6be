"""Run configuration: one declarative YAML/JSON file plus command-line overrides."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from coaff.geo import DEFAULT_FLOOR_SECONDS, DEFAULT_SPEED_KMH
from coaff.linkgen import SCHEMES


class ConfigError(ValueError):
    pass


DATASETS = {"all": ("all",), "stable": ("stable",), "both": ("all", "stable")}
MODEL_CHOICES = {"M1": ("M1",), "M2": ("M2",), "both": ("M1", "M2")}

# keys that never change results and stay out of the fingerprint
_VOLATILE = ("output", "workers", "timestamp", "figures")


@dataclass
class RunConfig:
    publications: str | None = None
    registry: str | None = None
    travel_times: str | None = None
    output: str = "out"
    dataset: str = "both"
    model: str = "both"
    schemes: list[str] = field(default_factory=lambda: list(SCHEMES))
    thresholds: list[int] = field(default_factory=lambda: [300, 400, 600])
    top_k: int = 10
    view_threshold: int = 250
    focus_threshold: int = 50
    mass: str = "articles"
    include_other: bool = False
    fallback_speed: float = DEFAULT_SPEED_KMH
    floor_seconds: float = DEFAULT_FLOOR_SECONDS
    rtol: float = 1e-8
    gtol: float = 1e-5
    max_iter: int = 500
    workers: int = 1
    timestamp: bool = True
    figures: bool = True

    @property
    def datasets(self) -> tuple[str, ...]:
        return DATASETS[self.dataset]

    @property
    def models(self) -> tuple[str, ...]:
        return MODEL_CHOICES[self.model]

    @property
    def outdir(self) -> Path:
        return Path(self.output)

    def validate(self, need_travel: bool = False) -> None:
        for key in ("publications", "registry"):
            value = getattr(self, key)
            if not value:
                raise ConfigError(f"missing required setting {key!r}")
            if not Path(value).exists():
                raise ConfigError(f"{key} file not found: {value}")
        if self.travel_times and not Path(self.travel_times).exists():
            raise ConfigError(f"travel_times file not found: {self.travel_times}")
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset must be one of {sorted(DATASETS)}")
        if self.model not in MODEL_CHOICES:
            raise ConfigError(f"model must be one of {sorted(MODEL_CHOICES)}")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ConfigError(f"schemes must be a non-empty subset of {SCHEMES}")
        if any(t < 0 for t in self.thresholds):
            raise ConfigError("thresholds must be non-negative")
        if self.mass not in ("articles", "strength"):
            raise ConfigError("mass must be 'articles' or 'strength'")
        if not self.fallback_speed > 0 or not self.floor_seconds > 0:
            raise ConfigError("fallback_speed and floor_seconds must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.view_threshold < 1 or self.focus_threshold < 1:
            raise ConfigError("view thresholds must be >= 1")

    def fingerprint(self) -> str:
        """SHA-256 over result-relevant settings and input file contents."""
        payload = {k: v for k, v in asdict(self).items() if k not in _VOLATILE}
        for key in ("publications", "registry", "travel_times"):
            path = getattr(self, key)
            payload[key] = None if not path else _file_digest(Path(path))
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _file_digest(path: Path) -> str | None:
    if not path.exists():
        return None
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    data: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        with p.open("r", encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a mapping")
        data.update(loaded)
        # relative input paths are taken relative to the config file
        for key in ("publications", "registry", "travel_times", "output"):
            v = data.get(key)
            if v and not Path(v).is_absolute():
                data[key] = str((p.parent / v).resolve())
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    cfg = RunConfig(**data)
    if isinstance(cfg.schemes, str):
        cfg.schemes = [s.strip() for s in cfg.schemes.split(",") if s.strip()]
    if isinstance(cfg.thresholds, (int, str)):
        cfg.thresholds = [int(t) for t in str(cfg.thresholds).split(",") if str(t).strip()]
    return cfg
