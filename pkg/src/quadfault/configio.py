"""Flat sectioned key=value config files (read/write), no third-party parser.

Files look like::

    [sim]
    dt = 0.01
    substeps = 4

    [train]
    mode = acdr_h2e

Values are stored as strings; typed access goes through the coercion
helpers so that a config written by :func:`write_config` reads back
identically.
"""

from __future__ import annotations

import configparser
from pathlib import Path


class ConfigError(ValueError):
    """Malformed config file or bad value."""


def read_config(path: str | Path) -> dict[str, dict[str, str]]:
    """Parse a sectioned key=value file into {section: {key: value}}."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return {section: dict(parser[section]) for section in parser.sections()}


def write_config(path: str | Path, sections: dict[str, dict[str, object]]) -> None:
    """Write {section: {key: value}} as a sectioned key=value file.

    Sections and keys are emitted in the order given; values via repr-free
    str() so floats round-trip through read_config + coercion.
    """
    lines = []
    for section, mapping in sections.items():
        lines.append(f"[{section}]")
        for key, value in mapping.items():
            lines.append(f"{key} = {format_value(value)}")
        lines.append("")
    Path(path).write_text("\n".join(lines))


def format_value(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)  # shortest exact round-trip
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    if value is None:
        return "none"
    return str(value)


def as_int(raw: str, key: str = "?") -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected integer, got {raw!r}") from exc


def as_float(raw: str, key: str = "?") -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected number, got {raw!r}") from exc


def as_bool(raw: str, key: str = "?") -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected boolean, got {raw!r}")


def as_float_list(raw: str, key: str = "?") -> list[float]:
    raw = raw.strip()
    if not raw or raw.lower() == "none":
        return []
    return [as_float(part, key) for part in raw.split(",")]


def as_int_list(raw: str, key: str = "?") -> list[int]:
    raw = raw.strip()
    if not raw or raw.lower() == "none":
        return []
    return [as_int(part, key) for part in raw.split(",")]
