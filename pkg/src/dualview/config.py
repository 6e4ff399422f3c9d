"""Plain-text run configuration: ``key = value`` lines with ``#`` comments."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything a training run needs; archived beside its outputs as config.txt."""
    data: str = ""
    out: str = ""
    checkpoint: str = ""
    kind: str = "parallel"
    backbone: str = "inception_lite"
    epochs: int = 30
    batch: int = 32
    lr: float = 1e-3
    decay: float = 0.99
    dropout: float = 0.1
    l2: float = 1e-6
    ensemble: int = 1
    seed: int = 0
    split_seed: int = 0
    seed_crop: int = 750
    rotate: bool = True
    workers: int = 1

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        raw = parse_config_text(text)
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(raw) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        values = {}
        for key, text_value in raw.items():
            kind = type(getattr(cls(), key))
            values[key] = convert(text_value, kind, key)
        return cls(**values)

    @classmethod
    def from_mapping(cls, mapping) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in dict(mapping).items() if k in names})


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def read_config(path) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"))


def convert(text: str, kind: type, key: str = "value"):
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    try:
        return kind(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.__name__}") from exc
