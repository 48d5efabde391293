"""Serialization: CSV time series, JSON mesh snapshots and SVG boundary plots."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import UsageError

CSV_HEADER = (
    "step", "t", "area", "mass", "u_min", "u_max", "w_min", "w_max",
    "div_residual_l2", "rad_min", "min_angle_deg", "lagrangian_err", "dt_used",
)
_REPORT_ATTRS = (
    "step", "t", "area", "mass", "u_min", "u_max", "w_min", "w_max",
    "div_residual_l2", "rad_min", "min_angle", "lagrangian_density_error", "dt_used",
)


def _fmt(x):
    return format(float(x), ".17g")


def report_row(report):
    return [str(report.step)] + [_fmt(getattr(report, a)) for a in _REPORT_ATTRS[1:]]


class TimeseriesWriter:
    """Append-as-you-go CSV writer so partial trajectories survive a crash."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(CSV_HEADER)

    def write(self, report):
        self._writer.writerow(report_row(report))
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_timeseries(reports, path):
    with TimeseriesWriter(path) as w:
        for r in reports:
            w.write(r)


def read_timeseries(path):
    """Return the CSV as a dict of float arrays keyed by header name."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(x) for x in row] for row in body]).reshape(len(body), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def _array(a):
    a = np.asarray(a)
    if a.ndim == 1:
        if a.dtype.kind in "iu":
            return "[" + ",".join(str(int(x)) for x in a) + "]"
        return "[" + ",".join(_fmt(x) for x in a) + "]"
    return "[" + ",".join(_array(row) for row in a) + "]"


def snapshot_text(state):
    mesh, f = state.mesh, state.fields
    parts = [
        ("t", _fmt(state.t)),
        ("nodes", _array(mesh.nodes)),
        ("triangles", _array(mesh.triangles)),
        ("boundary", _array(mesh.boundary)),
        ("w", _array(state.w.values)),
    ]
    if f is not None:
        parts += [
            ("u", _array(f.u.values)),
            ("v", _array(f.v.vertex_values)),
            ("p", _array(f.p.values)),
        ]
    return "{\n" + ",\n".join(f'"{k}": {v}' for k, v in parts) + "\n}\n"


def emit_snapshot(state, path):
    """Write the state as JSON; parent directories are created as needed.

    Fields: ``t, nodes, triangles, boundary, w, u, v, p`` with every array
    indexed like ``nodes`` and floats written with 17 significant digits.
    """
    path = Path(path)
    for arr in (state.mesh.nodes, state.w.values):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"refusing to write non-finite values to {path}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(snapshot_text(state))
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write snapshot: {exc.strerror}", str(path)) from None
    return path


def load_snapshot(path):
    """Read a snapshot back; numeric arrays come back as ndarrays."""
    doc = json.loads(Path(path).read_text())
    out = {"t": float(doc["t"])}
    for key in ("nodes", "w", "u", "v", "p"):
        if key in doc:
            out[key] = np.asarray(doc[key], dtype=float)
    for key in ("triangles", "boundary"):
        out[key] = np.asarray(doc[key], dtype=np.int64)
    return out


def _color(s):
    # blue (early) to red (late)
    r, g, b = (int(round(255 * c)) for c in (0.12 + 0.80 * s, 0.30 * (1 - s) + 0.10, 0.85 - 0.75 * s))
    return f"#{r:02x}{g:02x}{b:02x}"


def svg_text(boundaries, times=None):
    """SVG 1.1 document with one closed path per boundary polyline."""
    boundaries = [np.asarray(b, dtype=float) for b in boundaries]
    if not boundaries:
        raise UsageError("emit_svg needs at least one boundary polyline")
    for b in boundaries:
        if b.ndim != 2 or b.shape[1] != 2 or len(b) < 2:
            raise UsageError("each boundary must be an (n, 2) array with n >= 2")
    allpts = np.vstack(boundaries)
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    center = 0.5 * (lo + hi)
    half = 1.05 * max(0.5 * float(np.max(hi - lo)), 1e-12)
    x0, y0, size = center[0] - half, -center[1] - half, 2 * half
    stroke = size / 400.0
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'viewBox="{x0:.6g} {y0:.6g} {size:.6g} {size:.6g}" width="600" height="600">',
    ]
    n = len(boundaries)
    for i, b in enumerate(boundaries):
        s = i / (n - 1) if n > 1 else 0.0
        d = "M " + " L ".join(f"{x:.6g} {-y:.6g}" for x, y in b) + " Z"
        title = f"<title>t = {times[i]:.6g}</title>" if times is not None else ""
        lines.append(f'<path d="{d}" fill="none" stroke="{_color(s)}" stroke-width="{stroke:.4g}">{title}</path>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def emit_svg(boundaries, path, times=None):
    path = Path(path)
    text = svg_text(boundaries, times)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
