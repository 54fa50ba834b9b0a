"""UTF-8 key/value configuration document.

One ``key = value`` pair per line, ``#`` comments. Keys are flat for the
pipeline section and prefixed ``loss.`` / ``schedule.`` for the other two.
The ``SEMAWARP_CONFIG`` environment variable overrides the default path.
"""

from __future__ import annotations

import os
from dataclasses import fields
from pathlib import Path

from .errors import ConfigError
from .losses import LossConfig
from .pipeline import PipelineConfig
from .train import TrainSchedule

DEFAULT_CONFIG_PATH = "semawarp.cfg"
ENV_VAR = "SEMAWARP_CONFIG"


def resolve_config_path(explicit=None) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get(ENV_VAR, DEFAULT_CONFIG_PATH))


def _parse_scalar(text: str, kind):
    if kind is bool:
        lowered = text.strip().lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ConfigError(f"cannot parse boolean from {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def _coerce(raw: str, annotation):
    text = raw.strip()
    if annotation in ("int", int):
        return int(text)
    if annotation in ("float", float):
        return float(text)
    if annotation in ("str", str):
        return text
    if "tuple" in str(annotation):
        return tuple(part.strip() for part in text.split(",") if part.strip())
    if "int | None" in str(annotation) or "Optional[int]" in str(annotation):
        return None if text.lower() in ("", "none") else int(text)
    return text


def parse_config_text(text: str) -> dict[str, str]:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def _build(cls, pairs: dict[str, str], prefix: str):
    kwargs = {}
    for f in fields(cls):
        key = f"{prefix}{f.name}"
        if key in pairs:
            kwargs[f.name] = _coerce(pairs[key], f.type)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {cls.__name__} settings: {exc}") from exc


def load_config(path=None) -> tuple[PipelineConfig, LossConfig, TrainSchedule]:
    """Read the config document; missing file yields all defaults."""
    path = resolve_config_path(path)
    if not path.exists():
        return PipelineConfig(), LossConfig(), TrainSchedule()
    pairs = parse_config_text(path.read_text(encoding="utf-8"))
    known = set()
    for cls, prefix in ((PipelineConfig, ""), (LossConfig, "loss."), (TrainSchedule, "schedule.")):
        known |= {f"{prefix}{f.name}" for f in fields(cls)}
    unknown = set(pairs) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    return (
        _build(PipelineConfig, pairs, ""),
        _build(LossConfig, pairs, "loss."),
        _build(TrainSchedule, pairs, "schedule."),
    )


def dump_config(pipeline: PipelineConfig, loss: LossConfig, schedule: TrainSchedule) -> str:
    """Serialize the three sections back into the document format."""
    lines = ["# semawarp configuration"]
    for cls_obj, prefix in ((pipeline, ""), (loss, "loss."), (schedule, "schedule.")):
        for f in fields(cls_obj):
            value = getattr(cls_obj, f.name)
            if isinstance(value, tuple):
                value = ", ".join(str(v) for v in value)
            if value is None:
                value = "none"
            lines.append(f"{prefix}{f.name} = {value}")
    return "\n".join(lines) + "\n"
