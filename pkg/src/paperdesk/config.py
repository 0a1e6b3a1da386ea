"""Application configuration loaded from a JSON key-value file.

Documented keys (all optional, defaults below):
  data_dir               where corpus/pool/thought files live
  provider               "mock" or "live" completion provider
  embed_dim              embedding dimension
  k                      default retrieval depth
  cache_capacity         LRU entry cap for the response cache
  daily_update_utc_time  "HH:MM" wall time for the scheduled daily update
"""

from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path


class ConfigError(ValueError):
    """Raised for an unusable configuration; message names the offending key."""


@dataclasses.dataclass
class AppConfig:
    data_dir: str = "data"
    provider: str = "mock"
    embed_dim: int = 384
    k: int = 10
    cache_capacity: int = 10_000
    daily_update_utc_time: str = "02:00"
    prompt_budget: int = 8192
    port: int = 8000
    fixture: str | None = None
    max_concurrent_requests: int = 64
    request_deadline_seconds: float = 30.0
    evolution_queue_limit: int = 10_000
    update_batch_size: int = 16
    update_pause_seconds: float = 0.02
    persist_cache: bool = False

    def data_path(self) -> Path:
        return Path(self.data_dir)


_INT_KEYS = {
    "embed_dim",
    "k",
    "cache_capacity",
    "prompt_budget",
    "port",
    "max_concurrent_requests",
    "evolution_queue_limit",
    "update_batch_size",
}
_POSITIVE_KEYS = _INT_KEYS | {"request_deadline_seconds", "update_pause_seconds"}


def load_config(path: str | os.PathLike | None = None, overrides: dict | None = None) -> AppConfig:
    """Build an AppConfig from an optional JSON file plus explicit overrides."""
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must contain a JSON object")
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    return _validate(raw)


def _validate(raw: dict) -> AppConfig:
    known = {f.name for f in dataclasses.fields(AppConfig)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown config key: {key}")
    cfg = AppConfig(**raw)
    if cfg.provider not in ("mock", "live"):
        raise ConfigError(f"provider: must be 'mock' or 'live', got {cfg.provider!r}")
    for key in _POSITIVE_KEYS:
        value = getattr(cfg, key)
        if key in _INT_KEYS and not isinstance(value, int):
            raise ConfigError(f"{key}: must be an integer, got {value!r}")
        if not isinstance(value, (int, float)) or value <= 0:
            raise ConfigError(f"{key}: must be positive, got {value!r}")
    parts = cfg.daily_update_utc_time.split(":")
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise ConfigError(f"daily_update_utc_time: expected HH:MM, got {cfg.daily_update_utc_time!r}")
    hh, mm = int(parts[0]), int(parts[1])
    if hh > 23 or mm > 59:
        raise ConfigError(f"daily_update_utc_time: out of range: {cfg.daily_update_utc_time!r}")
    if not isinstance(cfg.data_dir, str) or not cfg.data_dir:
        raise ConfigError("data_dir: must be a non-empty path")
    return cfg
