"""TOML parameter files for the command-line tools.

Every record is flat except guided-filter settings, which are sub-tables
with ``radius``, ``eps`` and ``subsample``.  Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
import os
from typing import Any

import tomli
import tomli_w

from .osfd import DehazeParams, GuidedParams
from .osmrp import ScaleSet
from .scene3r import SynthParams


class ConfigError(ValueError):
    """Bad configuration: unknown key, wrong type or out-of-range value."""


def load_toml(path: str | os.PathLike) -> dict:
    try:
        with open(path, "rb") as f:
            return tomli.load(f)
    except (OSError, tomli.TOMLDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e


def dump_toml(data: dict, path: str | os.PathLike) -> None:
    with open(path, "wb") as f:
        tomli_w.dump(data, f)


def _check_keys(data: dict, allowed, where: str) -> None:
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def _guided(data: Any, default: GuidedParams, where: str) -> GuidedParams:
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a table")
    _check_keys(data, ("radius", "eps", "subsample"), where)
    try:
        return dataclasses.replace(default, **data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def _build(cls, data: dict, where: str, special: dict):
    fields = {f.name for f in dataclasses.fields(cls)}
    _check_keys(data, fields | set(special), where)
    defaults = cls()
    kwargs = {}
    for key, value in data.items():
        if key in special:
            continue
        if key.endswith("_filter"):
            kwargs[key] = _guided(value, getattr(defaults, key), f"{where}.{key}")
            continue
        expected = type(getattr(defaults, key))
        if expected is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, expected) or (expected is int and isinstance(value, bool)):
            raise ConfigError(f"{where}.{key} must be {expected.__name__}, got {value!r}")
        kwargs[key] = value
    return kwargs


def dehaze_params(data: dict | None = None) -> DehazeParams:
    """Build :class:`DehazeParams`; ``scales`` and ``downsample`` set the scale set."""
    data = dict(data or {})
    kwargs = _build(DehazeParams, data, "dehaze", {"scales": None, "downsample": None})
    try:
        if "scales" in data or "downsample" in data:
            sizes = data.get("scales", list(ScaleSet().sizes))
            if not isinstance(sizes, list) or not all(isinstance(s, int) for s in sizes):
                raise ConfigError("dehaze.scales must be a list of integers")
            kwargs["scales"] = ScaleSet(tuple(sizes), bool(data.get("downsample", True)))
        return DehazeParams(**kwargs)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def synth_params(data: dict | None = None) -> SynthParams:
    kwargs = _build(SynthParams, dict(data or {}), "synth", {})
    try:
        return SynthParams(**kwargs)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def to_dict(params) -> dict:
    """Plain TOML-ready dict of a parameter record."""
    out = {}
    for f in dataclasses.fields(params):
        v = getattr(params, f.name)
        if isinstance(v, ScaleSet):
            out["scales"] = list(v.sizes)
            out["downsample"] = v.downsample
        elif isinstance(v, GuidedParams):
            out[f.name] = dataclasses.asdict(v)
        else:
            out[f.name] = v
    return out


def section(data: dict, name: str, known: tuple[str, ...] = ("dehaze", "synth")) -> dict:
    """The ``[name]`` table of a sectioned file, or the file itself if flat."""
    if isinstance(data.get(name), dict):
        _check_keys(data, known, "top-level")
        return data[name]
    return data
