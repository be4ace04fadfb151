"""
Flows of vector fields: dense integration, Poincaré sections and return
maps, Newton shooting for closed orbits and sampled monotonicity
certificates.
"""
import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.integrate import RK45, OdeSolution
from scipy.optimize import brentq
from scipy.spatial.distance import directed_hausdorff
from scipy.stats import qmc

from .contact import DomainError
from .exprs import Expression, ExpressionDomainError, ReebLabError
from .forms import Chart, VectorField

logger = logging.getLogger(__name__)


class IntegrationError(ReebLabError):
    """The stepper failed (step size underflow or a non-finite state)."""


class NoReturn(ReebLabError):
    def __init__(self, reason: str, t_max: float):
        self.reason = reason
        self.t_max = t_max
        super().__init__(f"no return to the section before T={t_max:g} ({reason})")


class EmptySampleError(ReebLabError):
    """A certificate or contact check was handed no sample points."""


@dataclass
class Crossing:
    time: float
    point: List[float]
    slope: float
    tangential: bool


class Section:
    """
    Hypersurface {h = 0} with a crossing direction (+1, -1 or 0 for both).

    ``accept`` is an optional expression that must be positive at a crossing;
    coordinate sections on periodic axes use it to keep one sheet of
    sin(2π(x - c)/P) = 0.
    """

    def __init__(self, h: Expression, direction: int = 1, accept: Optional[Expression] = None, name: str = ""):
        self.h = h
        self.direction = direction
        self.accept = accept
        self.name = name or f"{{{h} = 0}}"

    @classmethod
    def coordinate(cls, chart: Chart, coord: str, value: float, direction: int = 1) -> "Section":
        i = chart.index(coord)
        period = chart.periods[i]
        if period is None:
            h = chart.parse(f"{coord} - ({value!r})")
            return cls(h, direction, name=f"{{{coord} = {value:g}}}")
        phase = f"2*pi*({coord} - ({value!r}))/{period!r}"
        return cls(chart.parse(f"sin({phase})"), direction, chart.parse(f"cos({phase})"),
                   name=f"{{{coord} = {value:g}}}")

    def value(self, point):
        return self.h.evaluate(point)

    def slope(self, point, x: VectorField) -> float:
        return float(self.h.gradient(point) @ x(point))

    def accepts(self, point) -> bool:
        return self.accept is None or self.accept.evaluate(point) > 0


class Trajectory:
    """
    Dense solution of one integration.

    States are kept unwrapped (continuous in periodic coordinates); use
    ``wrapped`` for chart-normalised values.
    """

    def __init__(self, field_name: str, chart: Chart, x0, times, states, solution: Optional[OdeSolution],
                 status: str = "complete", exit_face: Optional[str] = None, events=None):
        self.field_name = field_name
        self.chart = chart
        self.x0 = np.asarray(x0, dtype=float)
        self.times = np.asarray(times, dtype=float)
        self.states = np.asarray(states, dtype=float).T  # (n, steps + 1)
        self.solution = solution
        self.status = status
        self.exit_face = exit_face
        self.events: List[Crossing] = list(events or [])

    def __call__(self, t):
        if self.solution is None:
            t = np.asarray(t, dtype=float)
            return np.broadcast_to(self.x0.reshape((-1,) + (1,) * t.ndim), (len(self.x0),) + t.shape).copy()
        return self.solution(t)

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def end(self) -> np.ndarray:
        return self.states[:, -1].copy()

    def wrapped(self, t=None) -> np.ndarray:
        raw = self.end if t is None else self(t)
        return self.chart.wrap(raw)

    def sample_times(self, per_step: int = 8) -> np.ndarray:
        if len(self.times) < 2:
            return self.times.copy()
        pieces = [np.linspace(a, b, per_step, endpoint=False) for a, b in zip(self.times[:-1], self.times[1:])]
        return np.concatenate(pieces + [self.times[-1:]])

    def sample(self, num: int = 512) -> Tuple[np.ndarray, np.ndarray]:
        ts = np.linspace(self.times[0], self.times[-1], num)
        return ts, self(ts)


def _locate_exit(chart: Chart, interp, t0: float, t1: float) -> Tuple[float, str]:
    a, b = min(t0, t1), max(t0, t1)
    candidates = []

    def bracket(g, label):
        g0, g1 = g(t0), g(t1)
        if g0 >= 0 > g1:
            candidates.append((brentq(g, a, b, xtol=1e-14), label))

    for i, (coord, (lo, hi), period) in enumerate(zip(chart.coords, chart.bounds, chart.periods)):
        if period is not None:
            continue
        if np.isfinite(lo):
            bracket(lambda t, i=i, lo=lo: float(interp(t)[i] - lo), f"{coord}={lo:.12g}")
        if np.isfinite(hi):
            bracket(lambda t, i=i, hi=hi: float(hi - interp(t)[i]), f"{coord}={hi:.12g}")
    if chart.predicate is not None:
        bracket(lambda t: float(chart.predicate.evaluate(chart.wrap(interp(t)))), "predicate")
    if not candidates:
        return t1, "boundary"
    return min(candidates, key=lambda c: abs(c[0] - t0))


def integrate(x: VectorField, x0, t_final: float, tol: float = 1e-10, sections: Sequence[Section] = (),
              stop: Optional[Callable[[List[Crossing]], bool]] = None, max_step: float = np.inf,
              eps_tangent: float = 1e-9) -> Trajectory:
    """
    Integrate X from x0 for time t_final (either sign).

    Dormand-Prince 5(4) with dense output, rtol = atol = tol. Leaving the
    chart's validity domain ends the run with status ``domain-exit`` and the
    exit face located on the dense output.
    """
    chart = x.chart
    y0 = np.asarray(x0, dtype=float)
    if not chart.contains(chart.wrap(y0)):
        raise DomainError(y0, chart.name)
    if t_final == 0:
        return Trajectory(x.name, chart, y0, [0.0], [y0], None)

    solver = RK45(lambda t, y: x(y), 0.0, y0, t_final, rtol=tol, atol=tol, max_step=max_step)
    times, states, interpolants, events = [0.0], [y0], [], []
    status, exit_face = "complete", None
    h_prev = [s.value(y0) for s in sections]
    while solver.status == "running":
        try:
            message = solver.step()
        except ExpressionDomainError as err:
            status, exit_face = "domain-exit", "expression-domain"
            logger.debug("%s stopped at t=%.6g: %s", x.name, solver.t, err)
            break
        if solver.status == "failed":
            raise IntegrationError(f"{x.name}: {message} near t={solver.t:.6g}")
        y = solver.y
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"{x.name}: non-finite state near t={solver.t:.6g}")
        interp = solver.dense_output()
        t_old, t_new = solver.t_old, solver.t
        if not chart.contains(chart.wrap(y)):
            t_exit, exit_face = _locate_exit(chart, interp, t_old, t_new)
            interpolants.append(interp)
            times.append(t_exit)
            states.append(interp(t_exit))
            status = "domain-exit"
            logger.debug("%s left %s through %s at t=%.6g", x.name, chart.name, exit_face, t_exit)
            break
        interpolants.append(interp)
        times.append(t_new)
        states.append(y.copy())
        for k, sec in enumerate(sections):
            h_new = sec.value(y)
            if h_prev[k] * h_new < 0 or (h_new == 0 and h_prev[k] != 0):
                g = lambda t, sec=sec: sec.value(interp(t))
                root = brentq(g, min(t_old, t_new), max(t_old, t_new), xtol=1e-12)
                point = interp(root)
                if sec.accepts(point):
                    slope = sec.slope(point, x)
                    events.append(Crossing(float(root), point.tolist(), slope, abs(slope) < eps_tangent))
            h_prev[k] = h_new
        if stop is not None and events and stop(events):
            break
    solution = OdeSolution(times, interpolants) if interpolants else None
    return Trajectory(x.name, chart, y0, times, states, solution, status, exit_face, events)


@dataclass
class ReturnResult:
    point: List[float]
    time: float
    raw_point: List[float]


def return_map(x: VectorField, section: Section, x0, t_max: float, tol: float = 1e-10,
               eps_tangent: float = 1e-9, on_section_tol: float = 1e-8) -> ReturnResult:
    """First transversal crossing of the section after t_min = 1e-3 t_max."""
    h0 = section.value(x0)
    if abs(h0) > on_section_tol:
        raise ReebLabError(f"start point is not on {section.name} (h = {h0:.3e})")
    s0 = section.slope(x0, x)
    if section.direction and np.sign(s0) != section.direction:
        raise ReebLabError(f"flow crosses {section.name} against the requested direction at the start point")
    t_min = 1e-3 * t_max

    def qualifies(c: Crossing) -> bool:
        return (c.time >= t_min and not c.tangential
                and (section.direction == 0 or np.sign(c.slope) == section.direction))

    traj = integrate(x, x0, t_max, tol, sections=[section],
                     stop=lambda events: qualifies(events[-1]), eps_tangent=eps_tangent)
    for c in traj.events:
        if c.tangential:
            logger.debug("tangential crossing of %s at t=%.6g skipped", section.name, c.time)
            continue
        if qualifies(c):
            return ReturnResult(x.chart.wrap(c.point).tolist(), c.time, c.point)
    raise NoReturn(traj.status if traj.status != "complete" else "time-limit", t_max)


@dataclass
class ClosedOrbit:
    point: List[float]
    period: float
    residual: float
    multipliers: Optional[List[List[float]]] = None
    parameters: Dict[str, float] = field(default_factory=dict)
    seed: Optional[List[float]] = None

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class OrbitSearchOptions:
    t_max: float = 200.0
    tol_orbit: float = 1e-9
    capture: float = 1e-2
    newton_tol: float = 1e-10
    dedup: float = 1e-4
    scan_tol: float = 1e-8
    refine_tol: float = 1e-12
    max_iter: int = 8
    candidates: int = 3
    frozen: Tuple[str, ...] = ()
    jobs: int = 1


def _periodic_distances(chart: Chart, samples: np.ndarray, x0: np.ndarray) -> np.ndarray:
    diff = samples - x0[:, None]
    for i, period in enumerate(chart.periods):
        if period is not None:
            diff[i] = np.mod(diff[i] + 0.5 * period, period) - 0.5 * period
    return np.sqrt(np.sum(diff * diff, axis=0))


def _near_returns(chart: Chart, traj: Trajectory, x0: np.ndarray, t_min: float, capture: float):
    ts = traj.sample_times()
    dist = _periodic_distances(chart, traj(ts), x0)
    found = []
    for k in range(1, len(ts) - 1):
        if ts[k] < t_min or dist[k] >= capture:
            continue
        if dist[k] <= dist[k - 1] and dist[k] <= dist[k + 1]:
            found.append(float(ts[k]))
    return found


def _shoot(x: VectorField, z: np.ndarray, period: float, tol: float) -> np.ndarray:
    traj = integrate(x, z, period, tol)
    if traj.status != "complete":
        raise DomainError(traj.end, x.chart.name)
    return traj.end


def _newton(x: VectorField, start: np.ndarray, period: float, opts: OrbitSearchOptions):
    chart = x.chart
    n = chart.dimension
    frozen = [chart.index(c) for c in opts.frozen]
    anchor = start.copy()
    direction = x(anchor)
    direction = direction / max(np.linalg.norm(direction), 1e-300)

    def residual(u):
        z, t = u[:n], u[n]
        orbit = chart.delta(_shoot(x, z, t, opts.refine_tol), z)
        extra = [float(chart.delta(z, anchor) @ direction)]
        extra += [z[i] - anchor[i] for i in frozen]
        return np.concatenate([orbit, extra])

    u = np.concatenate([start, [period]])
    jac = None
    for _ in range(opts.max_iter):
        r = residual(u)
        if np.linalg.norm(r[:n]) <= opts.newton_tol:
            return u, r, jac
        jac = np.empty((len(r), n + 1))
        for j in range(n + 1):
            step = 1e-7 * max(1.0, abs(u[j]))
            du = np.zeros(n + 1)
            du[j] = step
            jac[:, j] = (residual(u + du) - r) / step
        delta = np.linalg.lstsq(jac, -r, rcond=None)[0]
        size = np.linalg.norm(delta)
        if size > 10 * opts.capture:
            delta *= 10 * opts.capture / size
        u = u + delta
        if u[n] <= 0 or not chart.contains(chart.wrap(u[:n])):
            return None
    r = residual(u)
    if np.linalg.norm(r[:n]) <= opts.newton_tol:
        return u, r, jac
    return None


def _refine_seed(x: VectorField, seed, opts: OrbitSearchOptions) -> Optional[ClosedOrbit]:
    chart = x.chart
    x0 = np.asarray(seed, dtype=float)
    t_min = 1e-3 * opts.t_max
    try:
        scan = integrate(x, x0, opts.t_max, opts.scan_tol)
    except ReebLabError as err:
        logger.debug("seed %s dropped: %s", x0.tolist(), err)
        return None
    for t_guess in _near_returns(chart, scan, x0, t_min, opts.capture)[:opts.candidates]:
        try:
            solved = _newton(x, x0, t_guess, opts)
        except ReebLabError as err:
            logger.debug("Newton from %s (T=%.6g) failed: %s", x0.tolist(), t_guess, err)
            continue
        if solved is None:
            logger.debug("Newton from %s (T=%.6g) diverged", x0.tolist(), t_guess)
            continue
        u, _, jac = solved
        n = chart.dimension
        z, period = u[:n], float(u[n])
        if not t_min <= period <= opts.t_max:
            continue
        final = chart.distance(_shoot(x, z, period, opts.refine_tol), z)
        if final > opts.tol_orbit:
            logger.debug("orbit candidate from %s rejected: residual %.3e", x0.tolist(), final)
            continue
        multipliers = None
        if jac is not None:
            eig = np.linalg.eigvals(jac[:n, :n] + np.eye(n))
            multipliers = [[float(e.real), float(e.imag)] for e in sorted(eig, key=lambda e: (-abs(e), e.real))]
        return ClosedOrbit(chart.wrap(z).tolist(), period, final, multipliers, seed=x0.tolist())
    return None


def _embed(chart: Chart, points: np.ndarray) -> np.ndarray:
    cols = []
    for i, period in enumerate(chart.periods):
        if period is None:
            cols.append(points[i])
        else:
            scale = period / (2 * math.pi)
            angle = 2 * math.pi * points[i] / period
            cols.extend([scale * np.cos(angle), scale * np.sin(angle)])
    return np.stack(cols, axis=1)


def deduplicate(x: VectorField, orbits: List[ClosedOrbit], radius: float, tol: float = 1e-10) -> List[ClosedOrbit]:
    """Merge orbits whose traced curves lie within ``radius`` in Hausdorff distance."""
    if not orbits:
        return []
    curves = []
    for orbit in orbits:
        traj = integrate(x, orbit.point, orbit.period, tol)
        curves.append(_embed(x.chart, traj(np.linspace(0.0, orbit.period, 128))))
    graph = nx.Graph()
    graph.add_nodes_from(range(len(orbits)))
    for i in range(len(orbits)):
        for j in range(i + 1, len(orbits)):
            dist = max(directed_hausdorff(curves[i], curves[j])[0], directed_hausdorff(curves[j], curves[i])[0])
            if dist < radius:
                graph.add_edge(i, j)
    kept = []
    for component in nx.connected_components(graph):
        members = sorted(component, key=lambda k: (orbits[k].period, orbits[k].point))
        kept.append(orbits[members[0]])
    return kept


def find_closed_orbits(x: VectorField, seeds, options: Optional[OrbitSearchOptions] = None,
                       parameters: Optional[Dict[str, float]] = None) -> List[ClosedOrbit]:
    """
    Grid-seeded shooting search.

    Each seed is scanned for near-returns within the capture radius; each
    candidate is refined by Newton on (x, T) with a phase condition, then
    orbits are deduplicated and sorted by period and representative.

    Args:
        x: the vector field
        seeds: (n, m) array of starting points
        options: search tolerances and limits
        parameters: transverse parameters recorded on every orbit

    Returns:
        closed orbits in deterministic order
    """
    opts = options or OrbitSearchOptions()
    pts = np.asarray(seeds, dtype=float)
    seed_list = [pts[:, k] for k in range(pts.shape[1])]
    if opts.jobs > 1:
        with ThreadPoolExecutor(max_workers=opts.jobs) as pool:
            results = list(pool.map(lambda s: _refine_seed(x, s, opts), seed_list))
    else:
        results = [_refine_seed(x, s, opts) for s in seed_list]
    found = [r for r in results if r is not None]
    for orbit in found:
        orbit.parameters = dict(parameters or {})
    unique = deduplicate(x, found, opts.dedup)
    unique.sort(key=lambda o: (round(o.period, 9), [round(v, 9) for v in o.point]))
    logger.info("%s: %d seeds, %d converged, %d distinct closed orbits",
                x.name, len(seed_list), len(found), len(unique))
    return unique


def seed_points(chart: Chart, box: Sequence[Tuple[float, float]], grid: Sequence[int],
                mode: str = "grid") -> np.ndarray:
    """Seeds in a box: a tensor grid, or a Sobol sequence of the same size."""
    if mode == "grid":
        axes = [np.array([0.5 * (lo + hi)]) if k == 1 else np.linspace(lo, hi, k)
                for (lo, hi), k in zip(box, grid)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh])
    elif mode == "sobol":
        count = int(np.prod(grid))
        unit = qmc.Sobol(d=len(box), scramble=False).random(count)
        lo = np.array([b[0] for b in box])
        hi = np.array([b[1] for b in box])
        pts = (lo + unit * (hi - lo)).T if count else np.zeros((len(box), 0))
    else:
        raise ReebLabError(f"unknown seeding mode {mode!r}")
    return pts[:, np.atleast_1d(chart.contains(pts))]


@dataclass
class CertificateReport:
    name: str
    functional: str
    region: Dict
    margin: float
    argmin: List[float]
    samples: int
    eps: float

    @property
    def verdict(self) -> str:
        return "PASS" if self.margin >= self.eps else "FAIL"

    def to_dict(self) -> Dict:
        out = asdict(self)
        out["verdict"] = self.verdict
        return out


def certify_monotone(x: VectorField, w: Expression, points, eps_cert: float = 0.0, name: str = "",
                     region: Optional[Dict] = None, jobs: int = 1, chunk: int = 4096) -> CertificateReport:
    """
    margin = inf over the samples of dW(X); PASS iff margin >= eps_cert.

    A sampled check, not a proof.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] == 0:
        raise EmptySampleError(f"certificate {name!r} has no sample points")

    def margins(block):
        return np.sum(w.gradient(block) * x(block), axis=0)

    blocks = [pts[:, k:k + chunk] for k in range(0, pts.shape[1], chunk)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(margins, blocks))
    else:
        parts = [margins(b) for b in blocks]
    values = np.concatenate(parts)
    worst = int(np.argmin(values))
    report = CertificateReport(name, str(w), dict(region or {}), float(values[worst]),
                               pts[:, worst].tolist(), int(pts.shape[1]), eps_cert)
    logger.info("certificate %s: margin %.6e over %d samples -> %s", name, report.margin, report.samples,
                report.verdict)
    return report


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def write_trajectory_csv(traj: Trajectory, path: str, num: int = 512, wrapped: bool = False) -> str:
    """RFC-4180 CSV with header ``t, coords...`` and 17 significant digits."""
    ts, states = traj.sample(num)
    if wrapped:
        states = traj.chart.wrap(states)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(["t", *traj.chart.coords])
        for k, t in enumerate(ts):
            writer.writerow([_fmt(t)] + [_fmt(v) for v in states[:, k]])
    return path


def write_orbits_json(orbits: Iterable[ClosedOrbit], path: str, chart: Chart) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"coords": list(chart.coords), "orbits": [o.to_dict() for o in orbits]}, fh, indent=2)
    return path
