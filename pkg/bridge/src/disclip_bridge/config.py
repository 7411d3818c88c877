"""Bridge configuration: checkpoint names, listen address, device."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

DEFAULT_ENCODER = "openai/clip-vit-base-patch32"
DEFAULT_LM = "openai-community/gpt2"


@dataclass(frozen=True)
class BridgeConfig:
    encoder_checkpoint: str = DEFAULT_ENCODER
    lm_checkpoint: str = DEFAULT_LM
    listen: str = "127.0.0.1:9900"
    device: str = "cpu"

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "BridgeConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def listen_host_port(self) -> tuple[str, int]:
        host, _, port = self.listen.rpartition(":")
        if not port.isdigit():
            raise ValueError(f"cannot parse listen address {self.listen!r}")
        return host or "127.0.0.1", int(port)
