"""
Command-line front end.

Every command writes ``report.json`` under ``--out`` and, where it
integrates something, CSV data with SVG figures.  Exit status: 0 on
success, 1 when a check fails or an orbit search contradicts the
scenario's expectation, 2 on configuration or usage errors (points outside
the chart included).
"""
import argparse
import json
import logging
import os
import sys
import time
from typing import Dict, List, Optional, Sequence

import numpy as np

from .contact import DomainError, boundary_energy, boundary_loop, horizontal_energy, verify_contact
from .exprs import ParseError, ReebLabError, constant_value
from .flow import integrate, write_orbits_json, write_trajectory_csv
from .forms import ChartError, ChartMap
from .geodesics import cogeodesic_reeb_compare, geodesic_field, geodesic_speed, liouville_unit_form
from .plots import FigureWriter
from .scenarios import BUILTINS, ConfigError, ScenarioError, builtin_config, load_config, resolve
from .tracer import RunTracer
from .version import version

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(ReebLabError):
    pass


class RunReport:
    """Everything one command produced; serialised as report.json."""

    def __init__(self, command: str, scenario: Optional[str], overrides: Dict[str, float], out_dir: str):
        self.command = command
        self.scenario = scenario
        self.overrides = dict(overrides)
        self.out_dir = out_dir
        self.parameters: Dict[str, float] = {}
        self.tracer = RunTracer()
        self.artifacts: List[str] = []
        self.started = time.time()
        self.expectation_failed = False

    @property
    def verdict(self) -> Optional[str]:
        verdicts = self.tracer.verdicts()
        if "FAIL" in verdicts or self.expectation_failed:
            return "FAIL"
        for v in ("ORBITS-FOUND", "NO-ORBIT-FOUND", "PASS"):
            if v in verdicts:
                return v
        return None

    @property
    def exit_code(self) -> int:
        return EXIT_FAILED if self.verdict == "FAIL" else EXIT_OK

    def to_dict(self) -> Dict:
        return {
            "command": self.command,
            "scenario": self.scenario,
            "overrides": self.overrides,
            "parameters": self.parameters,
            "version": version,
            "verdict": self.verdict,
            "checks": self.tracer.checks(),
            "artifacts": sorted(os.path.relpath(p, self.out_dir) for p in self.artifacts),
            "started": self.started,
            "wall_time": time.time() - self.started,
        }

    def write(self) -> str:
        os.makedirs(self.out_dir, exist_ok=True)
        path = os.path.join(self.out_dir, "report.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def parse_point(text: str) -> List[float]:
    try:
        return [constant_value(part) for part in text.split(",")]
    except ParseError as err:
        raise UsageError(f"bad point {text!r}: {err}")


def parse_grid(text: str) -> List[int]:
    try:
        counts = [int(part) for part in text.lower().split("x")]
    except ValueError:
        raise UsageError(f"bad grid {text!r}; expected e.g. 6x6x6")
    if any(c < 1 for c in counts):
        raise UsageError(f"bad grid {text!r}")
    return counts


def parse_overrides(items: Sequence[str]) -> Dict[str, float]:
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects name=value, got {item!r}")
        try:
            out[name.strip()] = constant_value(value)
        except ParseError as err:
            raise UsageError(f"--set {item!r}: {err}")
    return out


def resolve_jobs(flag: Optional[int]) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get("REEB_LAB_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"REEB_LAB_JOBS must be an integer, got {env!r}")
    return 1


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_list(args, report: RunReport):
    rows = []
    for sid in BUILTINS:
        cfg = builtin_config(sid)
        rows.append({"id": sid, "description": cfg["description"], "parameters": cfg["parameters"]})
        print(f"{sid:28s} {cfg['description']}")
    report.tracer.capture(rows, "built-in scenarios")


def cmd_verify_contact(args, report: RunReport, sc):
    checked = False
    for name, cs in sc.contacts.items():
        grid = args.grid if cs.chart.dimension <= 3 else min(args.grid, 6)
        result = verify_contact(cs, grid)
        report.tracer.capture(result.to_dict(), f"contact condition of {name} on {cs.chart.name}", result.verdict)
        print(f"{name}: {result.verdict} (min |vol| {result.min_abs_volume:.6g})")
        checked = True
    for name, metric in sc.metrics.items():
        if metric.chart.dimension != 2:
            continue
        cs = liouville_unit_form(metric, sc.tolerances["contact"])
        result = verify_contact(cs, args.grid)
        report.tracer.capture(result.to_dict(), f"Liouville unit form of {name}", result.verdict)
        print(f"liouville:{name}: {result.verdict} (min |vol| {result.min_abs_volume:.6g})")
        checked = True
    if not checked:
        raise UsageError(f"{sc.id} has no contact form or surface metric")


def cmd_reeb(args, report: RunReport, sc):
    name = args.form or sc.primary
    if name not in sc.contacts:
        raise UsageError(f"{sc.id}: no contact form {name!r}")
    sample = sc.contacts[name].reeb_at(parse_point(args.at))
    ok = max(sample.residuals) <= 1e-9
    report.tracer.capture({"point": list(sample.point), "vector": list(sample.vector),
                           "residuals": list(sample.residuals)}, f"Reeb vector of {name}", "PASS" if ok else "FAIL")
    print("R = " + ", ".join(f"{v:.17g}" for v in sample.vector))


def _trajectory_figures(report: RunReport, traj, stem: str, title: str):
    writer = FigureWriter(report.out_dir)
    report.artifacts.append(write_trajectory_csv(traj, os.path.join(report.out_dir, f"{stem}.csv")))
    ts, states = traj.sample(512)
    coords = traj.chart.coords
    writer.series(f"{stem}-coords", ts, {c: states[i] for i, c in enumerate(coords)}, title=title)
    if len(coords) >= 2:
        writer.projection(f"{stem}-{coords[0]}-{coords[1]}", states[0], states[1], (coords[0], coords[1]),
                          title=title)
    report.artifacts += writer.written


def cmd_flow(args, report: RunReport, sc):
    spec = args.field or (f"reeb:{sc.primary}" if sc.primary else (sc.search.field if sc.search else None))
    if spec is None:
        raise UsageError(f"{sc.id}: pass --field")
    x = sc.field(spec)
    traj = integrate(x, parse_point(args.start), args.time, tol=args.tol or sc.tolerances["integrate"])
    payload = {"field": spec, "start": traj.x0.tolist(), "t_end": traj.t_end, "end": traj.end.tolist(),
               "status": traj.status, "exit_face": traj.exit_face, "steps": len(traj.times) - 1}
    report.tracer.capture(payload, f"flow of {spec}")
    _trajectory_figures(report, traj, "trajectory", f"{sc.id}: {spec}")
    print(f"{traj.status} at t={traj.t_end:.17g}: " + ", ".join(f"{v:.17g}" for v in traj.end))


def cmd_orbits(args, report: RunReport, sc):
    if sc.search is None:
        raise UsageError(f"{sc.id} declares no orbit search")
    grid = parse_grid(args.grid) if args.grid else None
    orbits = sc.find_orbits(grid, args.tmax, jobs=args.jobs, mode="sobol" if args.sobol else "grid")
    verdict = "ORBITS-FOUND" if orbits else "NO-ORBIT-FOUND"
    expected = "ORBITS-FOUND" if sc.search.expect == "orbits" else "NO-ORBIT-FOUND"
    chart = sc.field(sc.search.field).chart
    report.tracer.capture({"orbits": [o.to_dict() for o in orbits], "expected": expected,
                           "seeds": int(sc.search_seeds(grid, "sobol" if args.sobol else "grid").shape[1]),
                           "t_max": args.tmax or sc.search.t_max}, f"closed orbit search on {sc.search.field}",
                          verdict)
    if verdict != expected:
        logger.warning("%s: orbit search gave %s, scenario expects %s", sc.id, verdict, expected)
        report.expectation_failed = True
    report.artifacts.append(write_orbits_json(orbits, os.path.join(report.out_dir, "orbits.json"), chart))
    x = sc.field(sc.search.field)
    for k, orbit in enumerate(orbits[:3]):
        traj = integrate(x, orbit.point, orbit.period, tol=sc.tolerances["integrate"])
        _trajectory_figures(report, traj, f"orbit-{k}", f"{sc.id}: period {orbit.period:.12g}")
    print(f"{verdict}: {len(orbits)} orbit(s)")
    for orbit in orbits:
        print(f"  T={orbit.period:.12g} at " + ", ".join(f"{v:.12g}" for v in orbit.point))


def cmd_certify(args, report: RunReport, sc):
    reports = sc.run_certificates(jobs=args.jobs)
    for rep in reports:
        report.tracer.capture(rep.to_dict(), f"monotonicity certificate {rep.name}", rep.verdict)
        print(f"{rep.name}: {rep.verdict} (margin {rep.margin:.6g}, eps {rep.eps:g})")
    for fx in sc.verify_fixtures():
        report.tracer.capture(fx.to_dict(), f"orbit fixture {fx.name}", fx.verdict)
        print(f"fixture {fx.name}: {fx.verdict} (residual {fx.residual:.3g})")
    if reports:
        writer = FigureWriter(report.out_dir)
        writer.margins("certificates", [r.name for r in reports], [r.margin for r in reports],
                       [r.eps for r in reports])
        report.artifacts += writer.written
    if not reports and not sc.fixtures:
        print(f"{sc.id}: no certificates or fixtures declared")


def _metric(sc, name: Optional[str]):
    if name is None:
        if len(sc.metrics) != 1:
            raise UsageError(f"{sc.id}: pass --metric (one of {', '.join(sc.metrics) or 'none'})")
        name = next(iter(sc.metrics))
    if name not in sc.metrics:
        raise UsageError(f"{sc.id}: no metric {name!r}")
    return sc.metrics[name]


def cmd_geodesics(args, report: RunReport, sc):
    metric = _metric(sc, args.metric)
    start = parse_point(args.start)
    if len(start) != 2 * metric.chart.dimension:
        raise UsageError(f"--from needs {2 * metric.chart.dimension} values (position then velocity)")
    tol = args.tol or sc.tolerances["integrate"]
    traj = integrate(geodesic_field(metric), start, args.time, tol=tol)
    ts, states = traj.sample(512)
    speed = geodesic_speed(metric, states)
    drift = float(np.max(np.abs(speed - speed[0])))
    ok = drift <= max(1e-8, 100 * tol * max(1.0, abs(args.time)))
    report.tracer.capture({"metric": metric.name, "status": traj.status, "t_end": traj.t_end,
                           "end": traj.end.tolist(), "speed_drift": drift}, f"geodesic of {metric.name}",
                          "PASS" if ok else "FAIL")
    _trajectory_figures(report, traj, "geodesic", f"{sc.id}: geodesic of {metric.name}")
    print(f"{traj.status} at t={traj.t_end:.12g}; speed drift {drift:.3e}")


def cmd_compare_cogeodesic(args, report: RunReport, sc):
    metric = _metric(sc, args.metric)
    tol = args.tol or sc.tolerances["integrate"]
    result = cogeodesic_reeb_compare(metric, parse_point(args.at), args.psi, args.time, tol)
    report.tracer.capture(result.to_dict(), f"Reeb flow vs cogeodesic flow on {metric.name}", result.verdict)
    print(f"{result.verdict}: max base deviation {result.max_deviation:.3e} over T={result.horizon:.6g}")


def _energy_map(sc, name: str) -> ChartMap:
    if name.endswith(".json"):
        maps = load_config(name).maps
        if len(maps) != 1:
            raise UsageError(f"{name}: a map file must define exactly one map, found {len(maps)}")
        return next(iter(maps.values()))
    if name not in sc.maps:
        raise UsageError(f"{sc.id}: no map {name!r} (one of {', '.join(sc.maps) or 'none'})")
    return sc.maps[name]


def cmd_energy(args, report: RunReport, sc):
    if sc.contact is None:
        raise UsageError(f"{sc.id} has no contact form")
    f, cs = _energy_map(sc, args.map), sc.contact
    try:
        e_h = horizontal_energy(f, cs, args.grid)
    except ChartError as err:
        raise UsageError(str(err))
    payload = {"map": f.name, "horizontal_energy": e_h}
    verdict = None
    radial = [c for c, p in zip(f.source.coords, f.source.periods) if p is None]
    if f.source.dimension == 2 and len(radial) == 1:
        lo, hi = f.source.bounds[f.source.index(radial[0])]
        outer = boundary_energy(boundary_loop(f, radial[0], hi), cs)
        # a polar chart starting at 0 has a collapsed inner edge
        inner = 0.0 if lo == 0 else boundary_energy(boundary_loop(f, radial[0], lo), cs)
        gap = abs(e_h - (outer - inner))
        payload.update({"outer_boundary_energy": outer, "inner_boundary_energy": inner, "stokes_gap": gap})
        verdict = "PASS" if gap <= 1e-7 * max(1.0, abs(e_h)) else "FAIL"
    report.tracer.capture(payload, f"energy of {f.name}", verdict)
    print(f"E^h = {e_h:.17g}" + (f"; Stokes {verdict} (gap {payload['stokes_gap']:.3e})" if verdict else ""))


COMMANDS = {
    "verify-contact": cmd_verify_contact,
    "reeb": cmd_reeb,
    "flow": cmd_flow,
    "orbits": cmd_orbits,
    "certify": cmd_certify,
    "geodesics": cmd_geodesics,
    "compare-cogeodesic": cmd_compare_cogeodesic,
    "energy": cmd_energy,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="./out", help="output directory (default ./out)")
    common.add_argument("--jobs", type=int, default=None, help="worker threads (env REEB_LAB_JOBS)")
    common.add_argument("--set", action="append", default=[], metavar="NAME=VALUE",
                        help="override a scenario parameter")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="reeb-lab", description="Contact forms, Reeb flows and geodesics lab")
    parser.add_argument("--version", action="version", version=f"%(prog)s {version}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list", parents=[common], help="list built-in scenarios")

    p = sub.add_parser("verify-contact", parents=[common], help="sample the contact condition")
    p.add_argument("scenario")
    p.add_argument("--grid", type=int, default=20)

    p = sub.add_parser("reeb", parents=[common], help="Reeb vector at a point")
    p.add_argument("scenario")
    p.add_argument("--at", required=True)
    p.add_argument("--form")

    p = sub.add_parser("flow", parents=[common], help="integrate a field from a point")
    p.add_argument("scenario")
    p.add_argument("--from", dest="start", required=True)
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--field")
    p.add_argument("--tol", type=float)

    p = sub.add_parser("orbits", parents=[common], help="closed orbit search")
    p.add_argument("scenario")
    p.add_argument("--leaf", type=float)
    p.add_argument("--grid")
    p.add_argument("--tmax", type=float)
    p.add_argument("--sobol", action="store_true", help="Sobol seeds instead of a tensor grid")

    p = sub.add_parser("certify", parents=[common], help="monotonicity certificates and orbit fixtures")
    p.add_argument("scenario")

    p = sub.add_parser("geodesics", parents=[common], help="integrate a geodesic")
    p.add_argument("scenario")
    p.add_argument("--metric")
    p.add_argument("--from", dest="start", required=True, help="q1,..,qn,v1,..,vn")
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("compare-cogeodesic", parents=[common], help="Reeb flow of the Liouville form vs geodesics")
    p.add_argument("scenario")
    p.add_argument("--metric")
    p.add_argument("--at", required=True)
    p.add_argument("--psi", type=float, default=0.0)
    p.add_argument("--time", type=float, default=20.0)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("energy", parents=[common], help="horizontal and boundary energies of a surface map")
    p.add_argument("scenario")
    p.add_argument("--map", required=True, help="a map of the scenario or a JSON file defining one map")
    p.add_argument("--grid", type=int, default=32)
    return parser


def dispatch(argv: Optional[Sequence[str]] = None) -> RunReport:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.jobs = resolve_jobs(args.jobs)
    overrides = parse_overrides(args.set)
    report = RunReport(args.command, getattr(args, "scenario", None), overrides, args.out)
    if args.command == "list":
        cmd_list(args, report)
        return report
    sc = resolve(args.scenario, overrides)
    if getattr(args, "leaf", None) is not None:
        if not sc.leaf:
            raise UsageError(f"{sc.id} has no leaf selector")
        overrides[sc.leaf["name"]] = args.leaf
        report.overrides = dict(overrides)
        sc = resolve(args.scenario, overrides)
    report.parameters = dict(sc.parameters)
    COMMANDS[args.command](args, report, sc)
    return report


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        report = dispatch(argv)
    except SystemExit as err:
        return int(err.code or 0) and EXIT_USAGE
    except (UsageError, ScenarioError, ConfigError, ParseError, DomainError) as err:
        print(f"reeb-lab: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ReebLabError as err:
        print(f"reeb-lab: check failed: {err}", file=sys.stderr)
        return EXIT_FAILED
    path = report.write()
    logger.info("report written to %s", path)
    if report.verdict:
        print(report.verdict)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
