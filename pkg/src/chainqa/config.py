"""Run configuration: defaults, TOML config file, command-line overrides."""
from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .chains import DEFAULT_CAP, DEFAULT_MAX_HOPS
from .gateway import BackendSpec
from .reasoner import DEFAULT_TOKEN_BUDGET, MODES, TEXT_MODE, TUPLE_MODE
from .templates import DEFAULT_TOP_K

STAGES = ("decompose", "reason", "summarize")
PATH_KEYS = ("kg", "templates", "projection", "qa", "train")
AUTO = "auto"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    kg: str | None = None
    templates: str | None = None
    projection: str | None = None
    qa: list[str] = field(default_factory=list)
    train: str | None = None
    delimiter: str = "|"
    qa_format: str = "metaqa"
    top_k: int = DEFAULT_TOP_K
    max_hops: int = DEFAULT_MAX_HOPS
    cap: int = DEFAULT_CAP
    mode: str = AUTO
    token_budget: int = DEFAULT_TOKEN_BUDGET
    dense_budget: int = 0
    dense_policy: str = "always"
    workers: int = 1
    any_in_set: bool = False
    backends: dict[str, str] = field(
        default_factory=lambda: {"decompose": "gateway", "reason": "gateway", "summarize": "template"}
    )
    gateway: dict[str, Any] = field(default_factory=dict)

    def validate(self, need: tuple[str, ...] = ()) -> "RunConfig":
        checks = [
            ("top_k", 1, 10),
            ("max_hops", 1, 4),
            ("cap", 1, None),
            ("token_budget", 1, None),
            ("dense_budget", 0, None),
            ("workers", 1, 256),
        ]
        for name, lo, hi in checks:
            v = getattr(self, name)
            if v < lo or (hi is not None and v > hi):
                raise ConfigError(f"{name}={v} outside [{lo}, {hi if hi is not None else 'inf'}]")
        if self.mode != AUTO and self.mode not in MODES:
            raise ConfigError(f"mode must be one of {(AUTO,) + MODES}")
        for stage in STAGES:
            if stage not in self.backends:
                raise ConfigError(f"no backend configured for stage {stage!r}")
        for key in need:
            value = getattr(self, key)
            if not value:
                raise ConfigError(f"--{key} is required")
            for p in value if isinstance(value, list) else [value]:
                if not Path(p).exists():
                    raise ConfigError(f"{key} file not found: {p}")
        return self

    def context_mode(self) -> str:
        if self.mode != AUTO:
            return self.mode
        return TUPLE_MODE if self.backends["reason"].split(":", 1)[0] == "gateway" else TEXT_MODE

    def gateway_spec(self, stage: str) -> BackendSpec:
        base = dict(self.gateway.get("default", {}))
        base.update(self.gateway.get(stage, {}))
        allowed = {f.name for f in fields(BackendSpec)}
        unknown = set(base) - allowed
        if unknown:
            raise ConfigError(f"unknown gateway settings: {sorted(unknown)}")
        return BackendSpec(kind="gateway", **base)


def _resolve(base: Path, value):
    if isinstance(value, list):
        return [_resolve(base, v) for v in value]
    p = Path(value)
    return str(p if p.is_absolute() else base / p)


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Flatten the TOML file into RunConfig keys; paths resolve against its directory."""
    path = Path(path)
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    out: dict[str, Any] = {}
    base = path.parent
    for key, value in raw.get("paths", {}).items():
        if key not in PATH_KEYS:
            raise ConfigError(f"unknown path key {key!r}")
        if key == "qa" and isinstance(value, str):
            value = [value]
        out[key] = _resolve(base, value)
    known = {f.name for f in fields(RunConfig)} - set(PATH_KEYS) - {"backends", "gateway"}
    for key, value in raw.get("run", {}).items():
        if key not in known:
            raise ConfigError(f"unknown run setting {key!r}")
        out[key] = value
    backends = {}
    for stage, value in raw.get("backends", {}).items():
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}")
        kind, _, arg = str(value).partition(":")
        if arg and kind != "gateway":
            arg = _resolve(base, arg)
        backends[stage] = f"{kind}:{arg}" if arg else kind
    if backends:
        out["backends"] = backends
    if "gateway" in raw:
        out["gateway"] = raw["gateway"]
    return out


def build_config(file_values: Mapping[str, Any] | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """defaults < config file < flags. ``None`` overrides are ignored."""
    cfg = RunConfig()
    for layer in (file_values or {}, overrides or {}):
        for key, value in layer.items():
            if value is None:
                continue
            if key == "backends":
                cfg.backends = {**cfg.backends, **value}
            elif key == "gateway":
                cfg.gateway = {**cfg.gateway, **value}
            else:
                setattr(cfg, key, value)
    return cfg
