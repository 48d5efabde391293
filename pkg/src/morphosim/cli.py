"""Command line interface.

Subcommands::

    morphosim run CONFIG --out DIR [--snapshot-every N]
    morphosim oracle {ball,ode,volume} [--t 0,1,3] [...]
    morphosim convergence CONFIG
    morphosim diagnose SNAPSHOT

Exit status: 0 completed, 2 breakdown, 1 configuration or I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import fcntl
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .config import parse_config
from .convergence import dt_convergence, morphogen_convergence, observed_orders
from .errors import MorphosimError, UsageError
from .fields import ResponseFunction
from .growth import OutputPlan, run
from .mesh import Mesh, boundary_diagnostics, element_quality
from .oracles import BallOracle, ball_solution, density_ode_trajectory, expected_volume
from .output import TimeseriesWriter, emit_snapshot, emit_svg, load_snapshot

EXIT_OK, EXIT_ERROR, EXIT_BREAKDOWN = 0, 1, 2
LOCK_NAME = ".morphosim.lock"


@dataclasses.dataclass
class RunArtifacts:
    out_dir: Path
    timeseries: Path
    snapshots: list
    svg: Path
    final_state: Path
    summary: Path
    status: str
    message: str = ""

    @property
    def exit_code(self):
        return EXIT_OK if self.status == "completed" else EXIT_BREAKDOWN


@contextmanager
def output_lock(out_dir):
    """Exclusive advisory lock on the output directory (released on exit)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / LOCK_NAME
    fh = open(path, "w")
    try:
        fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
    except BlockingIOError:
        fh.close()
        raise OSError(f"output directory {out_dir} is locked by another process") from None
    try:
        yield
    finally:
        fcntl.flock(fh, fcntl.LOCK_UN)
        fh.close()
        path.unlink(missing_ok=True)


def cmd_run(config_path, out_dir, snapshot_every=None):
    config = parse_config(config_path)
    if snapshot_every is not None:
        config = dataclasses.replace(
            config, output=OutputPlan(snapshot_every=snapshot_every, svg_every=config.output.svg_every)
        )
    out = Path(out_dir)
    plan = config.output
    snapshots, boundaries, times = [], [], []

    with output_lock(out), TimeseriesWriter(out / "timeseries.csv") as writer:
        def record(state, report):
            writer.write(report)
            k = report.step
            if plan.snapshot_every and k % plan.snapshot_every == 0:
                snapshots.append(emit_snapshot(state, out / "snapshots" / f"step_{k:06d}.json"))
            if plan.svg_every and k % plan.svg_every == 0:
                boundaries.append(state.mesh.boundary_points)
                times.append(state.t)

        result = run(config, callback=record)
        if not times or times[-1] != result.state.t:
            boundaries.append(result.state.mesh.boundary_points)
            times.append(result.state.t)
        svg = emit_svg(boundaries, out / "boundaries.svg", times=times)
        final = emit_snapshot(result.state, out / "final_state.json")
        last = result.reports[-1]
        summary = {
            "status": result.status,
            "breakdown_reason": None if result.completed else result.status,
            "message": result.message,
            "exit_code": EXIT_OK if result.completed else EXIT_BREAKDOWN,
            "steps": last.step,
            "t_final": last.t,
            "area_final": last.area,
            "mass_final": last.mass,
        }
        summary_path = out / "summary.json"
        summary_path.write_text(json.dumps(summary, indent=2) + "\n")
    return RunArtifacts(out, out / "timeseries.csv", snapshots, svg, final, summary_path,
                        result.status, result.message)


def _response_from_args(args):
    if args.response == "linear":
        return ResponseFunction.linear(args.a)
    if args.response == "saturating":
        return ResponseFunction.saturating(args.g_max)
    return ResponseFunction.threshold(args.a, args.c, args.s0)


def cmd_oracle(kind, args, stream=None):
    """Print a CSV table of reference values on the requested time grid."""
    stream = stream or sys.stdout
    times = [float(x) for x in args.t.split(",")]
    if kind == "ball":
        orc = BallOracle(args.w0, _response_from_args(args), r0=args.r0, d=args.d)
        print("t,w,u,radius,v_coefficient,p", file=stream)
        for t in times:
            s = ball_solution(orc, t)
            print(f"{t:.17g},{s.w:.17g},{s.u:.17g},{orc.r0 * s.radius_scale:.17g},"
                  f"{s.v_coefficient:.17g},{s.p:.17g}", file=stream)
    elif kind == "ode":
        ws = density_ode_trajectory(_response_from_args(args), args.w0, times)
        print("t,w", file=stream)
        for t, w in zip(times, ws):
            print(f"{t:.17g},{w:.17g}", file=stream)
    elif kind == "volume":
        print("t,area", file=stream)
        for t in times:
            print(f"{t:.17g},{expected_volume(args.area0, args.kappa0, args.a, t):.17g}", file=stream)
    else:
        raise UsageError(f"unknown oracle kind {kind!r}; choose ball, ode or volume")


def _fmt_orders(orders):
    return " ".join("nan" if not np.isfinite(o) else f"{o:.3f}" for o in orders)


def cmd_convergence(config_path, stream=None):
    stream = stream or sys.stdout
    config = parse_config(config_path)
    hs, errs, orders = morphogen_convergence(config)
    print("quantity,refinement,values,observed_orders", file=stream)
    print(f"morphogen_l2,h={'/'.join(f'{h:g}' for h in hs)},"
          f"{' '.join(f'{e:.6e}' for e in errs)},{_fmt_orders(orders)}", file=stream)
    dts, area_err, lag_err = dt_convergence(config)
    dt_str = "/".join(f"{d:g}" for d in dts)
    print(f"area_error,dt={dt_str},{' '.join(f'{e:.6e}' for e in area_err)},"
          f"{_fmt_orders(observed_orders(area_err))}", file=stream)
    print(f"lagrangian_err,dt={dt_str},{' '.join(f'{e:.6e}' for e in lag_err)},"
          f"{_fmt_orders(observed_orders(lag_err))}", file=stream)
    return {"h": hs, "morphogen_l2": errs, "morphogen_orders": orders,
            "dt": dts, "area_error": area_err, "area_orders": observed_orders(area_err),
            "lagrangian_err": lag_err, "lagrangian_orders": observed_orders(lag_err)}


def cmd_diagnose(snapshot_path, stream=None):
    stream = stream or sys.stdout
    snap = load_snapshot(snapshot_path)
    mesh = Mesh(snap["nodes"], snap["triangles"], snap["boundary"])
    diag = boundary_diagnostics(mesh)
    rows = {
        "t": snap["t"],
        "n_nodes": mesh.n_nodes,
        "n_triangles": mesh.n_triangles,
        "rad_min": diag.rad_min,
        "perimeter": diag.perimeter,
        "area": diag.area,
        "min_angle_deg": element_quality(mesh),
    }
    for key in ("w", "u", "p"):
        if key in snap:
            rows[f"{key}_min"] = float(snap[key].min())
            rows[f"{key}_max"] = float(snap[key].max())
    if "v" in snap:
        rows["speed_max"] = float(np.max(np.hypot(snap["v"][:, 0], snap["v"][:, 1])))
    for k, v in rows.items():
        print(f"{k},{v:.17g}" if isinstance(v, float) else f"{k},{v}", file=stream)
    return rows


def build_parser():
    p = argparse.ArgumentParser(prog="morphosim", description="Morphogen-driven tissue growth simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a configuration")
    r.add_argument("config")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--snapshot-every", type=int, default=None, metavar="N")

    o = sub.add_parser("oracle", help="print reference values")
    o.add_argument("kind", help="ball, ode or volume")
    o.add_argument("--t", default="0,1,3", help="comma separated times")
    o.add_argument("--response", choices=("linear", "saturating", "threshold"), default="linear")
    o.add_argument("--a", type=float, default=1.0)
    o.add_argument("--g-max", type=float, default=1.0)
    o.add_argument("--c", type=float, default=0.5)
    o.add_argument("--s0", type=float, default=0.05)
    o.add_argument("--w0", type=float, default=1.0)
    o.add_argument("--d", type=int, default=2)
    o.add_argument("--r0", type=float, default=1.0)
    o.add_argument("--area0", type=float, default=float(np.pi))
    o.add_argument("--kappa0", type=float, default=1.0)

    c = sub.add_parser("convergence", help="refinement study against the references")
    c.add_argument("config")

    d = sub.add_parser("diagnose", help="summarize a snapshot")
    d.add_argument("snapshot")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            art = cmd_run(args.config, args.out, args.snapshot_every)
            print(f"{art.status}: {art.timeseries}" + (f" ({art.message})" if art.message else ""))
            return art.exit_code
        if args.command == "oracle":
            cmd_oracle(args.kind, args)
        elif args.command == "convergence":
            cmd_convergence(args.config)
        else:
            cmd_diagnose(args.snapshot)
        return EXIT_OK
    except (MorphosimError, OSError, ValueError, KeyError) as exc:
        key = getattr(exc, "key", None)
        print(f"error: {exc}" + (f" [key: {key}]" if key else ""), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
