"""Flat key=value configuration with PFG_-prefixed environment overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

ENV_PREFIX = "PFG_"


@dataclass
class AppConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8646
    fixtures_dir: str = ""
    edge_ceiling: float = 5.0
    query_ceiling: float = 10.0
    type_threshold: float = 0.5
    link_threshold: float = 0.8
    margin: float = 1.0
    k: int = 3


def load_config(path: str | Path | None = None) -> AppConfig:
    raw: dict[str, str] = {}
    if path is not None:
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"malformed config line: {line!r}")
            raw[key.strip()] = value.strip()
    for f in fields(AppConfig):
        env = os.environ.get(ENV_PREFIX + f.name.upper())
        if env is not None:
            raw[f.name] = env
    cfg = AppConfig()
    for f in fields(AppConfig):
        if f.name in raw:
            setattr(cfg, f.name, _coerce(f.default, raw.pop(f.name)))
    if raw:
        raise ValueError(f"unknown config keys: {sorted(raw)}")
    return cfg


def _coerce(default, value: str):
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value
