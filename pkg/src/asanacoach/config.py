"""Server configuration: defaults, JSON config file, ASANA_CONFIG fallback."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

CONFIG_ENV_VAR = "ASANA_CONFIG"


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    model_path: str | None = None
    poses_path: str | None = None  # None -> packaged reference library
    alpha: float = 0.5
    min_confidence: float = 0.3
    cooldown_ms: int = 2000
    window: int = 30
    stride: int = 5
    log_dir: str = "./sessions"
    max_sessions: int = 8
    static_dir: str | None = None

    def validate(self) -> None:
        if self.window < 3:
            raise ValueError(f"window must be >= 3, got {self.window}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if self.max_sessions < 1:
            raise ValueError("max_sessions must be >= 1")
        for name in ("model_path", "poses_path", "static_dir"):
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise ValueError(f"{name} does not exist: {value}")


def load_server_config(path: str | None = None) -> ServerConfig:
    """Config from an explicit JSON file, else $ASANA_CONFIG, else defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR) or None
    config = ServerConfig()
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        known = {f.name for f in fields(ServerConfig)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, value in doc.items():
            setattr(config, key, value)
    return config
