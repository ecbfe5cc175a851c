"""Flat ``key = value`` configuration files.

Blank lines and lines starting with ``#`` are ignored.  Keys use the long
command-line option names with dashes or underscores (``epochs``,
``batch-size``).  Values are kept as strings; the caller converts them with
the same parsers it uses for command-line flags, so a file value and a flag
value are read identically, and flags given on the command line win.
"""

from __future__ import annotations

import argparse


class ConfigFileError(ValueError):
    pass


def read_config(path) -> dict[str, str]:
    out: dict[str, str] = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as err:
        raise ConfigFileError(f"cannot read config {path}: {err.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep or not key:
                raise ConfigFileError(f"{path}:{lineno}: expected 'key = value'")
            if key in out:
                raise ConfigFileError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value.strip()
    return out


def apply_config(parser: argparse.ArgumentParser, values: dict[str, str], path="config") -> None:
    """Install file values as parser defaults, converted and validated like flags."""
    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None:
            raise ConfigFileError(f"{path}: unknown key {key!r} for this command")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigFileError(f"{path}: {key} expects a boolean, got {raw!r}")
            defaults[key] = low in ("true", "1", "yes")
            continue
        try:
            value = action.type(raw) if action.type else raw
        except (TypeError, ValueError, argparse.ArgumentTypeError) as err:
            raise ConfigFileError(f"{path}: bad value for {key}: {err}") from None
        if action.choices is not None and value not in action.choices:
            raise ConfigFileError(f"{path}: {key} must be one of {sorted(action.choices)}, got {raw!r}")
        defaults[key] = value
    parser.set_defaults(**defaults)
