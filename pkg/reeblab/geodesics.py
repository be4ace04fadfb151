"""
Riemannian metrics on charts: Christoffel symbols, geodesic flows, the
Liouville form of the unit cotangent bundle and the comparison of its Reeb
flow with the cogeodesic flow.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .contact import ContactStructure
from .exprs import Expression, ReebLabError, call
from .forms import Chart, ChartError, ChartMap, DifferentialForm, VectorField
from .flow import integrate

logger = logging.getLogger(__name__)


class MetricError(ReebLabError):
    """Metric is not symmetric, not positive definite, or singular at a point."""


@dataclass
class ChristoffelTensor:
    point: List[float]
    gamma: np.ndarray  # gamma[k, i, j] = Γ^k_ij

    def symbol(self, k: int, i: int, j: int) -> float:
        return float(self.gamma[k, i, j])


def _agree(a: Expression, b: Expression, values) -> bool:
    with np.errstate(all="ignore"):
        va = np.asarray(a.evaluate_values(values, strict=False), dtype=float)
        vb = np.asarray(b.evaluate_values(values, strict=False), dtype=float)
    return bool(np.allclose(va, vb, rtol=1e-12, atol=1e-12, equal_nan=True))


class Metric:
    """Symmetric matrix of coefficient expressions g_ij on a chart."""

    def __init__(self, chart: Chart, matrix: Sequence[Sequence[Expression]], name: str = ""):
        n = chart.dimension
        if len(matrix) != n or any(len(row) != n for row in matrix):
            raise MetricError(f"metric on {chart.name!r} needs an {n}x{n} matrix")
        rows = []
        for i in range(n):
            row = []
            for j in range(n):
                e = matrix[i][j]
                if not isinstance(e, Expression):
                    e = Expression.constant(e, chart.coords)
                row.append(e)
            rows.append(row)
        samples = None
        for i in range(n):
            for j in range(i + 1, n):
                if str(rows[i][j]) != str(rows[j][i]):
                    if samples is None:
                        samples = list(chart.sample_grid(5))
                    if not _agree(rows[i][j], rows[j][i], samples):
                        raise MetricError(f"metric is not symmetric in ({i}, {j})")
                rows[j][i] = rows[i][j]
        self.chart = chart
        self.matrix = rows
        self.name = name

    @classmethod
    def from_strings(cls, chart: Chart, components: Mapping[str, str], name: str = "", **parse_kwargs) -> "Metric":
        """
        Build from ``{"r,r": "1", "theta,theta": "tanh(r)^2"}``; missing entries are 0.
        """
        n = chart.dimension
        matrix = [[Expression.constant(0.0, chart.coords) for _ in range(n)] for _ in range(n)]
        for key, source in components.items():
            a, b = (part.strip() for part in key.split(","))
            i, j = chart.index(a), chart.index(b)
            expr = chart.parse(source, **parse_kwargs)
            matrix[i][j] = expr
            matrix[j][i] = expr
        return cls(chart, matrix, name)

    @classmethod
    def euclidean(cls, chart: Chart) -> "Metric":
        n = chart.dimension
        return cls(chart, [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)], "euclidean")

    def to_strings(self) -> Dict[str, str]:
        out = {}
        for i, a in enumerate(self.chart.coords):
            for j in range(i, self.chart.dimension):
                if not self.matrix[i][j].is_zero:
                    out[f"{a},{self.chart.coords[j]}"] = str(self.matrix[i][j])
        return out

    def at(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        n = self.chart.dimension
        g = np.empty((n, n) + p.shape[1:])
        for i in range(n):
            for j in range(n):
                g[i, j] = self.matrix[i][j].evaluate(p)
        return g

    def jet(self, point) -> Tuple[np.ndarray, np.ndarray]:
        """g[i, j] and dg[l, i, j] = ∂_l g_ij (trailing batch axes kept)."""
        p = np.asarray(point, dtype=float)
        n = self.chart.dimension
        g = np.empty((n, n) + p.shape[1:])
        dg = np.empty((n, n, n) + p.shape[1:])
        done = {}
        for i in range(n):
            for j in range(n):
                key = (min(i, j), max(i, j))
                if key not in done:
                    done[key] = self.matrix[i][j].value_and_gradient(p)
                g[i, j], dg[:, i, j] = done[key]
        return g, dg

    def min_eigenvalue(self, points) -> float:
        g = self.at(points)
        if g.ndim == 2:
            return float(np.min(np.linalg.eigvalsh(g)))
        return float(np.min(np.linalg.eigvalsh(np.moveaxis(g, -1, 0))))

    def gamma(self, points) -> np.ndarray:
        """Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il - ∂_l g_ij), batched."""
        g, dg = self.jet(points)
        term = np.einsum("ijl...->lij...", dg) + np.einsum("jil...->lij...", dg) - dg
        if g.ndim == 2:
            try:
                ginv = np.linalg.inv(g)
            except np.linalg.LinAlgError:
                raise MetricError(f"singular metric at {np.asarray(points).tolist()}")
            return 0.5 * np.einsum("kl,lij->kij", ginv, term)
        ginv = np.moveaxis(np.linalg.inv(np.moveaxis(g, -1, 0)), 0, -1)
        return 0.5 * np.einsum("kl...,lij...->kij...", ginv, term)

    def christoffel(self, point) -> ChristoffelTensor:
        p = np.asarray(point, dtype=float)
        if self.min_eigenvalue(p) <= 0:
            raise MetricError(f"metric is not positive definite at {p.tolist()}")
        return ChristoffelTensor(p.tolist(), self.gamma(p))

    def norm_squared(self, points, vectors) -> np.ndarray:
        g = self.at(points)
        v = np.asarray(vectors, dtype=float)
        return np.einsum("ij...,i...,j...->...", g, v, v)


def christoffel(metric: Metric, point) -> ChristoffelTensor:
    return metric.christoffel(point)


def tangent_chart(chart: Chart) -> Chart:
    """(q, v) chart of the tangent bundle over a base chart."""
    velocity = tuple(f"v_{c}" for c in chart.coords)
    coords = chart.coords + velocity
    predicate = chart.predicate.rebase(coords) if chart.predicate is not None else None
    return Chart(f"T {chart.name}", coords, chart.bounds + ((-np.inf, np.inf),) * chart.dimension,
                 chart.periods + (None,) * chart.dimension, predicate)


def geodesic_field(metric: Metric) -> VectorField:
    """q' = v, v'^k = -Γ^k_ij v^i v^j on the tangent chart."""
    n = metric.chart.dimension

    def spray(y):
        y = np.asarray(y, dtype=float)
        q, v = y[:n], y[n:]
        acc = -np.einsum("kij...,i...,j...->k...", metric.gamma(q), v, v)
        return np.concatenate([v, acc])

    return VectorField(tangent_chart(metric.chart), evaluator=spray, name=f"geodesic:{metric.name}")


def geodesic_speed(metric: Metric, states) -> np.ndarray:
    s = np.asarray(states, dtype=float)
    n = metric.chart.dimension
    return metric.norm_squared(s[:n], s[n:])


def unit_cotangent_chart(chart: Chart, fiber: str = "psi") -> Chart:
    if chart.dimension != 2:
        raise ChartError("unit cotangent charts are built over 2-dimensional bases")
    coords = chart.coords + (fiber,)
    predicate = chart.predicate.rebase(coords) if chart.predicate is not None else None
    return Chart(f"ST* {chart.name}", coords, chart.bounds + ((0.0, 2 * math.pi),),
                 chart.periods + (2 * math.pi,), predicate)


def coframe(metric: Metric, coords: Sequence[str]):
    """Orthonormal coframe θ1 = C11 dq1 + C12 dq2, θ2 = C22 dq2 rebased onto ``coords``."""
    a, b, c = (metric.matrix[0][0].rebase(coords), metric.matrix[0][1].rebase(coords),
               metric.matrix[1][1].rebase(coords))
    c11 = call("sqrt", a)
    c12 = b / c11
    c22 = call("sqrt", c - b * b / a)
    return c11, c12, c22


def liouville_unit_form(metric: Metric, eps_contact: float = 1e-8, fiber: str = "psi") -> ContactStructure:
    """
    Canonical form p dq restricted to the unit cotangent bundle, with the
    unit covector p = cos ψ θ1 + sin ψ θ2 for the orthonormal coframe θ.
    """
    if metric.chart.dimension != 2:
        raise ChartError("the Liouville unit form needs a 2-dimensional base")
    chart = unit_cotangent_chart(metric.chart, fiber)
    c11, c12, c22 = coframe(metric, chart.coords)
    cos_psi = call("cos", chart.coordinate(fiber))
    sin_psi = call("sin", chart.coordinate(fiber))
    p1 = cos_psi * c11
    p2 = cos_psi * c12 + sin_psi * c22
    alpha = DifferentialForm(chart, 1, {(0,): p1, (1,): p2})
    return ContactStructure(alpha, eps_contact=eps_contact, name=f"liouville:{metric.name}")


def unit_covector(metric: Metric, q, psi: float) -> np.ndarray:
    g = metric.at(q)
    c11 = math.sqrt(g[0, 0])
    c12 = g[0, 1] / c11
    c22 = math.sqrt(g[1, 1] - g[0, 1] ** 2 / g[0, 0])
    return np.array([math.cos(psi) * c11, math.cos(psi) * c12 + math.sin(psi) * c22])


@dataclass
class CogeodesicComparison:
    max_deviation: float
    horizon: float
    tol: float
    samples: int
    reeb_status: str
    geodesic_status: str

    @property
    def verdict(self) -> str:
        return "PASS" if self.max_deviation <= 100 * self.tol else "FAIL"

    def to_dict(self) -> Dict:
        return {"verdict": self.verdict, "max_deviation": self.max_deviation, "horizon": self.horizon,
                "tol": self.tol, "samples": self.samples, "reeb_status": self.reeb_status,
                "geodesic_status": self.geodesic_status}


def cogeodesic_reeb_compare(metric: Metric, q0, psi0: float, horizon: float, tol: float = 1e-10,
                            samples: int = 400) -> CogeodesicComparison:
    """
    Integrate the Reeb flow of the Liouville unit form and the geodesic flow
    with the dual initial velocity; report the largest base-point gap.
    """
    cs = liouville_unit_form(metric)
    q0 = np.asarray(q0, dtype=float)
    p = unit_covector(metric, q0, psi0)
    v0 = np.linalg.solve(metric.at(q0), p)
    reeb = integrate(cs.reeb_field(), np.concatenate([q0, [psi0]]), horizon, tol)
    geo = integrate(geodesic_field(metric), np.concatenate([q0, v0]), horizon, tol)
    t_common = min(abs(reeb.t_end), abs(geo.t_end)) * math.copysign(1.0, horizon)
    ts = np.linspace(0.0, t_common, samples)
    n = metric.chart.dimension
    gap = reeb(ts)[:n] - geo(ts)[:n]
    deviation = float(np.max(np.sqrt(np.sum(gap * gap, axis=0))))
    logger.info("cogeodesic comparison on %s: max deviation %.3e over T=%.6g", metric.name, deviation, t_common)
    return CogeodesicComparison(deviation, float(t_common), tol, samples, reeb.status, geo.status)


def pullback_metric(f: ChartMap, metric: Metric, name: str = "") -> Metric:
    """(F*g)_ij = Σ ∂_i F^a ∂_j F^b (g_ab ∘ F)."""
    if metric.chart != f.target:
        raise ChartError(f"metric lives on {metric.chart.name!r}, map targets {f.target.name!r}")
    m = f.source.dimension
    n = f.target.dimension
    jac = [[f.components[a].derivative(i) for i in range(m)] for a in range(n)]
    composed = [[metric.matrix[a][b].compose(f.components) for b in range(n)] for a in range(n)]
    matrix = []
    for i in range(m):
        row = []
        for j in range(m):
            total = Expression.constant(0.0, f.source.coords)
            for a in range(n):
                for b in range(n):
                    if jac[a][i].is_zero or jac[b][j].is_zero or composed[a][b].is_zero:
                        continue
                    total = total + jac[a][i] * jac[b][j] * composed[a][b]
            row.append(total)
        matrix.append(row)
    # symmetric by construction; share the upper triangle
    for i in range(m):
        for j in range(i):
            matrix[i][j] = matrix[j][i]
    return Metric(f.source, matrix, name or f"{f.name}*{metric.name}")
