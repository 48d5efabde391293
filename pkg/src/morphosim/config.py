"""JSON configuration files.

A configuration is a single JSON object::

    {
      "domain":   {"kind": "disk", "radius": 1.0, "h": 0.05},
      "density":  {"kind": "constant", "value": 1.0},
      "response": {"kind": "linear", "a": 1.0},
      "t_end": 1.0,
      "dt": 0.01,
      "output": {"snapshot_every": 10}
    }

Unknown keys at any level are rejected so that typos in sweeps fail loudly.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .fields import ResponseFunction
from .growth import BreakdownThresholds, DensitySpec, DomainSpec, OutputPlan, SimConfig

REQUIRED = ("domain", "density", "response", "t_end")
TOP_LEVEL = REQUIRED + ("dt", "cfl_guard", "breakdown", "remesh", "deformation_update", "output")

DOMAIN_KEYS = {
    "disk": {"radius", "h", "center"},
    "polygon": {"vertices", "h"},
    "ellipse": {"semi_axes", "h", "center"},
    "dumbbell": {"a", "b", "h", "center"},
}
DENSITY_KEYS = {
    "constant": {"value"},
    "gaussian": {"center", "width", "amplitude"},
    "nodal": {"path"},
}
RESPONSE_KEYS = {
    "linear": {"a"},
    "saturating": {"g_max"},
    "threshold": {"a", "c", "s0"},
}
BREAKDOWN_KEYS = {"rad_min", "w_max", "min_angle_deg", "rad_fraction", "w_factor", "angle_floor_deg"}
OUTPUT_KEYS = {"snapshot_every", "svg_every"}


def _section(doc, name, table):
    sec = doc[name]
    if not isinstance(sec, dict):
        raise ConfigError(f"'{name}' must be an object", key=name)
    kind = sec.get("kind")
    if kind not in table:
        raise ConfigError(f"'{name}.kind' must be one of {sorted(table)}, got {kind!r}", key=f"{name}.kind")
    _reject_unknown(sec, table[kind] | {"kind"}, prefix=f"{name}.")
    return kind, {k: v for k, v in sec.items() if k != "kind"}


def _reject_unknown(doc, allowed, prefix=""):
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"unknown key '{prefix}{key}'", key=f"{prefix}{key}")


def _number(value, key):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
        raise ConfigError(f"'{key}' must be a finite number", key=key)
    return float(value)


def _load_nodal(path, base):
    p = Path(path)
    if not p.is_absolute():
        p = base / p
    try:
        if p.suffix == ".json":
            vals = np.asarray(json.loads(p.read_text()), dtype=float)
        else:
            vals = np.loadtxt(p, dtype=float, ndmin=1)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read nodal density {p}: {exc}", key="density.path") from None
    if vals.ndim != 1 or not np.all(np.isfinite(vals)):
        raise ConfigError(f"nodal density {p} must be a finite 1-D list", key="density.path")
    return tuple(vals.tolist())


def config_from_dict(doc, base=Path(".")):
    """Build a :class:`SimConfig` from an already decoded JSON object."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    _reject_unknown(doc, TOP_LEVEL)
    for key in REQUIRED:
        if key not in doc:
            raise ConfigError(f"missing required key '{key}'", key=key)

    kind, d = _section(doc, "domain", DOMAIN_KEYS)
    if "h" not in d:
        raise ConfigError("missing required key 'domain.h'", key="domain.h")
    dom = {"kind": kind, "h": _number(d["h"], "domain.h")}
    for key in ("radius", "a", "b"):
        if key in d:
            dom[key] = _number(d[key], f"domain.{key}")
    for key in ("center", "semi_axes"):
        if key in d:
            dom[key] = tuple(_number(x, f"domain.{key}") for x in d[key])
    if kind == "polygon":
        if "vertices" not in d:
            raise ConfigError("missing required key 'domain.vertices'", key="domain.vertices")
        dom["vertices"] = tuple(tuple(_number(x, "domain.vertices") for x in v) for v in d["vertices"])
    domain = DomainSpec(**dom)

    kind, d = _section(doc, "density", DENSITY_KEYS)
    den = {"kind": kind}
    if kind == "nodal":
        if "path" not in d:
            raise ConfigError("missing required key 'density.path'", key="density.path")
        den["values"] = _load_nodal(d["path"], base)
    else:
        for key in ("value", "width", "amplitude"):
            if key in d:
                den[key] = _number(d[key], f"density.{key}")
        if "center" in d:
            den["center"] = tuple(_number(x, "density.center") for x in d["center"])
    density = DensitySpec(**den)

    kind, d = _section(doc, "response", RESPONSE_KEYS)
    try:
        response = getattr(ResponseFunction, kind)(**{k: _number(v, f"response.{k}") for k, v in d.items()})
    except ValueError as exc:
        raise ConfigError(str(exc), key="response") from None

    breakdown = doc.get("breakdown", {})
    _reject_unknown(breakdown, BREAKDOWN_KEYS, prefix="breakdown.")
    breakdown = BreakdownThresholds(**{k: _number(v, f"breakdown.{k}") for k, v in breakdown.items()})

    output = doc.get("output", {})
    _reject_unknown(output, OUTPUT_KEYS, prefix="output.")

    kwargs = {}
    for key in ("dt", "cfl_guard"):
        if key in doc:
            kwargs[key] = _number(doc[key], key)
    if "remesh" in doc:
        if not isinstance(doc["remesh"], bool):
            raise ConfigError("'remesh' must be true or false", key="remesh")
        kwargs["remesh"] = doc["remesh"]
    if "deformation_update" in doc:
        kwargs["deformation_update"] = doc["deformation_update"]
    return SimConfig(
        domain=domain,
        density=density,
        response=response,
        t_end=_number(doc["t_end"], "t_end"),
        breakdown=breakdown,
        output=OutputPlan(**output),
        **kwargs,
    )


def parse_config(path):
    """Read and validate a JSON configuration file; defaults are filled in."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return config_from_dict(doc, base=path.parent)
