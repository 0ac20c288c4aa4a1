"""Flat key=value run configuration with section prefixes.

One line per setting ("train.stage2.learning_rate=0.006"), '#' comments,
no nesting. Flag overrides win over file values. Every run echoes its
effective configuration to the output directory in canonical (sorted)
form; feeding that file back reproduces the run.
"""

from __future__ import annotations

import dataclasses

from .errors import ConfigError


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"config line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def read_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def merge_configs(*configs) -> dict:
    merged = {}
    for config in configs:
        merged.update(config)
    return merged


def format_config(config: dict, header_comments=()) -> str:
    lines = [f"# {c}" for c in header_comments]
    lines += [f"{k}={config[k]}" for k in sorted(config)]
    return "\n".join(lines) + "\n"


def write_config(path, config: dict, header_comments=()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_config(config, header_comments))


def _coerce(value: str, default):
    if isinstance(default, bool):
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        return tuple(int(x) for x in value.split(",") if x.strip())
    return value


def build_dataclass(cls, config: dict, prefix: str, **overrides):
    """Fill a dataclass from `prefix`-scoped keys, coercing by field defaults."""
    kwargs = {}
    for f in dataclasses.fields(cls):
        key = prefix + f.name
        if key in config:
            default = f.default if f.default is not dataclasses.MISSING else ""
            try:
                kwargs[f.name] = _coerce(config[key], default)
            except (ValueError, ConfigError) as err:
                raise ConfigError(f"bad value for {key!r}: {err}")
    kwargs.update(overrides)
    try:
        return cls(**kwargs)
    except TypeError as err:
        raise ConfigError(f"cannot build {cls.__name__}: {err}")


def dataclass_to_config(obj, prefix: str) -> dict:
    """Inverse of build_dataclass: every field as a flat string value."""
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, tuple):
            out[prefix + f.name] = ",".join(str(x) for x in v)
        elif isinstance(v, bool):
            out[prefix + f.name] = "true" if v else "false"
        elif isinstance(v, float):
            out[prefix + f.name] = repr(v)
        else:
            out[prefix + f.name] = str(v)
    return out


def check_known_keys(config: dict, known_prefixes) -> None:
    for key in config:
        if not any(key.startswith(p) for p in known_prefixes):
            raise ConfigError(
                f"unknown config key {key!r} (known sections: {sorted(known_prefixes)})")
