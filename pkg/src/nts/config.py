"""Flat ``key = value`` config files.

::

    # defaults shared by several runs
    include = base.cfg
    iterations = 2000
    texture_mode = "plane2d"
    lr_texture = 5e-3

Values are parsed as JSON and fall back to the raw string, so ``plane2d`` and
``"plane2d"`` mean the same thing. ``include`` paths are relative to the including
file and are applied first; keys later in a file override earlier ones.
"""

from __future__ import annotations

import json
from pathlib import Path


class ConfigError(ValueError):
    pass


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _load(path: Path, seen: tuple) -> dict:
    path = path.resolve()
    if path in seen:
        raise ConfigError(f"include cycle through {path}")
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    out = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        # whole-line comments, or trailing ones introduced by whitespace + '#'
        line = raw.split(" #", 1)[0].strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key == "include":
            out.update(_load(path.parent / parse_value(value), seen + (path,)))
        else:
            out[key] = parse_value(value)
    return out


def load_config(path) -> dict:
    return _load(Path(path), ())


def dump_config(values: dict) -> str:
    return "".join(f"{k} = {json.dumps(values[k])}\n" for k in sorted(values))


def write_config(values: dict, path) -> None:
    Path(path).write_text(dump_config(values))
