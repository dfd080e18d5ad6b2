"""Configuration files (TOML or JSON) and ``key=value`` overrides.

A config has the top-level keys ``experiment``, ``output_dir``, ``workers``,
``seed`` and the tables ``params`` (SimulationParams fields) and ``options``
(experiment-specific settings). Unknown keys are errors.
"""

import json
import re
import sys
from dataclasses import fields
from pathlib import Path

from cavsol.core import SimulationParams
from cavsol.experiments import REGISTRY, ExperimentSpec, default_params

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TOP_LEVEL = {"experiment", "output_dir", "workers", "seed", "params", "options"}
_PARAM_TYPES = {f.name: f.type for f in fields(SimulationParams)}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists one message per problem."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def _locate(text, key, fmt):
    """1-based line number where ``key`` is defined, or None."""
    if fmt == "json":
        pat = re.compile(r'"' + re.escape(key) + r'"\s*:')
    else:
        pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for i, line in enumerate(text.splitlines(), 1):
        if pat.search(line):
            return i
    return None


def _where(text, key, fmt, path):
    ln = _locate(text, key, fmt) if text else None
    return f"{path}:{ln}: " if ln else f"{path}: "


def parse_text(text, fmt, path="<config>"):
    try:
        if fmt == "json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}:{exc.lineno}: JSON parse error: {exc.msg}"]) from exc
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        ln = m.group(1) if m else "?"
        raise ConfigError([f"{path}:{ln}: TOML parse error: {exc}"]) from exc
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a table/object"])
    return data


def _check_param_type(name, value):
    kind = _PARAM_TYPES[name]
    kind = kind if isinstance(kind, str) else kind.__name__
    if kind == "float":
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif kind == "int":
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, str)
    return ok, kind


def _check_option_type(default, value):
    if value is None:
        return True
    if default is None or isinstance(default, list):
        if isinstance(value, list):
            return all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
        return default is None and isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    return isinstance(value, type(default))


def parse_override(item):
    """Split ``key=value``; the value is read as a TOML literal, else a bare string."""
    if "=" not in item:
        raise ConfigError([f"override {item!r} must have the form key=value"])
    key, raw = (s.strip() for s in item.split("=", 1))
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def build_spec(data, text="", fmt="toml", path="<config>", overrides=(), experiment=None,
               output_dir=None, seed=None):
    """Validate a parsed config mapping and return an :class:`ExperimentSpec`."""
    errors = []
    for k in data:
        if k not in TOP_LEVEL:
            errors.append(f"{_where(text, k, fmt, path)}unknown key {k!r} "
                          f"(allowed: {', '.join(sorted(TOP_LEVEL))})")
    name = experiment or data.get("experiment")
    if name is None:
        errors.append(f"{path}: no experiment given (set 'experiment' or pass --experiment)")
    elif name not in REGISTRY:
        errors.append(f"{_where(text, 'experiment', fmt, path)}unknown experiment {name!r}; "
                      f"choose from {', '.join(sorted(REGISTRY))}")
    if errors:
        raise ConfigError(errors)

    params_in = dict(data.get("params", {}))
    options_in = dict(data.get("options", {}))
    for sect, val in (("params", data.get("params", {})), ("options", data.get("options", {}))):
        if not isinstance(val, dict):
            errors.append(f"{_where(text, sect, fmt, path)}{sect!r} must be a table")
    if errors:
        raise ConfigError(errors)
    if seed is not None:
        params_in["seed"] = seed
    elif "seed" in data:
        params_in["seed"] = data["seed"]

    ov_list = []
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        ov_list.append((key, value))
        bare = key.split(".", 1)[-1]
        if key.startswith("options.") or (bare in REGISTRY[name].options and bare not in _PARAM_TYPES):
            options_in[bare] = value
        elif bare in _PARAM_TYPES:
            params_in[bare] = value
        else:
            errors.append(f"override {key!r}: no such parameter or option for {name}")

    for k, v in params_in.items():
        loc = _where(text, k, fmt, path)
        if k not in _PARAM_TYPES:
            errors.append(f"{loc}unknown parameter {k!r}")
            continue
        ok, kind = _check_param_type(k, v)
        if not ok:
            errors.append(f"{loc}parameter {k!r} must be {kind} (got {v!r})")
    opts = REGISTRY[name].options
    for k, v in options_in.items():
        loc = _where(text, k, fmt, path)
        if k not in opts:
            errors.append(f"{loc}unknown option {k!r} for {name} "
                          f"(allowed: {', '.join(sorted(opts))})")
        elif not _check_option_type(opts[k], v):
            errors.append(f"{loc}option {k!r} has the wrong type (got {v!r})")
    if errors:
        raise ConfigError(errors)

    base = default_params(name)
    merged = base.to_dict()
    merged.update({k: float(v) if _PARAM_TYPES[k] in ("float", float) else v
                   for k, v in params_in.items()})
    try:
        SimulationParams(**merged)
    except ValueError as exc:
        for msg in str(exc).split("; "):
            field_name = msg.split(" ", 1)[0]
            errors.append(f"{_where(text, field_name, fmt, path)}{msg}")
    workers = data.get("workers", 1)
    if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
        errors.append(f"{_where(text, 'workers', fmt, path)}workers must be a positive integer")
    if errors:
        raise ConfigError(errors)

    params = SimulationParams(**merged)
    if REGISTRY[name].locked_analytics:
        params.check_locked_regime()
    return ExperimentSpec(name, params, tuple(ov_list),
                          str(output_dir or data.get("output_dir", "results")),
                          options_in, workers)


def validate_config(path, overrides=(), experiment=None, output_dir=None, seed=None):
    """Load and validate a TOML or JSON config file.

    Raises :class:`ConfigError` listing every problem with ``file:line`` prefixes.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"{path}: no such file"])
    text = path.read_text(encoding="utf-8")
    fmt = "json" if path.suffix.lower() == ".json" else "toml"
    data = parse_text(text, fmt, str(path))
    return build_spec(data, text, fmt, str(path), overrides, experiment, output_dir, seed)
