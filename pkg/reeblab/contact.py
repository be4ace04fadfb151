"""
Contact forms on 3-dimensional leaf charts: contact volume, Reeb fields and
the energies of maps into the leaf (or its symplectisation).
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .exprs import Expression, ReebLabError
from .forms import (Chart, ChartError, ChartMap, DifferentialForm, VectorField, d, integrate_form,
                    line_integral, pullback, wedge)

logger = logging.getLogger(__name__)


class NotContactError(ReebLabError):
    def __init__(self, point, volume: float):
        self.point = np.asarray(point, dtype=float).tolist()
        self.volume = volume
        super().__init__(f"contact volume {volume:.3e} is degenerate at {self.point}")


class DomainError(ReebLabError):
    def __init__(self, point, chart: str):
        self.point = np.asarray(point, dtype=float).tolist()
        super().__init__(f"point {self.point} is outside chart {chart!r}")


class OpenLoopError(ReebLabError):
    """boundary_energy was handed a curve whose endpoints do not meet."""


@dataclass(frozen=True)
class ReebSample:
    point: Tuple[float, ...]
    vector: Tuple[float, ...]
    residuals: Tuple[float, float]  # (|α(R) - 1|, sup_i |(i_R dα)(e_i)|)


@dataclass
class ContactReport:
    """Sampled contact condition; ``passed`` iff the scaled minimum clears the threshold."""

    min_abs_volume: float
    min_scaled_volume: float
    argmin: List[float]
    samples: int
    threshold: float
    passed: bool

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def to_dict(self) -> Dict:
        return {
            "verdict": self.verdict,
            "min_abs_volume": self.min_abs_volume,
            "min_scaled_volume": self.min_scaled_volume,
            "argmin": self.argmin,
            "samples": self.samples,
            "threshold": self.threshold,
        }


class ContactStructure:
    """
    A 1-form α on a leaf chart, with transverse parameters already substituted.

    Args:
        alpha: the 1-form
        parameters: transverse parameter values (kept for reports)
        eps_contact: threshold for the scaled contact volume
        name: label used in logs and reports
    """

    def __init__(self, alpha: DifferentialForm, parameters: Optional[Mapping[str, float]] = None,
                 eps_contact: float = 1e-8, name: str = ""):
        if alpha.degree != 1:
            raise ChartError("a contact form is a 1-form")
        if alpha.chart.dimension % 2 == 0:
            raise ChartError("contact forms live on odd-dimensional charts")
        self.alpha = alpha
        self.chart: Chart = alpha.chart
        self.parameters = dict(parameters or {})
        self.eps_contact = eps_contact
        self.name = name
        self.dalpha = d(alpha)
        self._coefficients = [alpha.coefficient((i,)) for i in range(self.chart.dimension)]
        self._top_form: Optional[DifferentialForm] = None

    def __repr__(self):
        return f"ContactStructure({self.name or self.chart.name}, alpha={self.alpha!r})"

    def _require_inside(self, point):
        if not self.chart.contains(point):
            raise DomainError(point, self.chart.name)

    def jet(self, points) -> Tuple[np.ndarray, np.ndarray]:
        """
        Coefficients of α and the antisymmetric matrix of dα.

        Returns:
            (a, A) with a[j] = α_j and A[i, j] = ∂_i α_j - ∂_j α_i, trailing
            batch axes preserved
        """
        p = np.asarray(points, dtype=float)
        n = self.chart.dimension
        a = np.empty((n,) + p.shape[1:])
        grads = np.empty((n, n) + p.shape[1:])
        for j, coeff in enumerate(self._coefficients):
            a[j], grads[j] = coeff.value_and_gradient(p)
        # grads[j, i] = ∂_i α_j
        big_a = np.swapaxes(grads, 0, 1) - grads
        return a, big_a

    def contact_volume(self, point):
        """(α ∧ dα^n)(e_1, ..., e_{2n+1}) in the chart basis."""
        if self.chart.dimension != 3:
            return self.contact_volume_general(point)
        p = np.asarray(point, dtype=float)
        if p.ndim == 1:
            self._require_inside(p)
        a, A = self.jet(p)
        vol = a[0] * A[1, 2] - a[1] * A[0, 2] + a[2] * A[0, 1]
        return float(vol) if p.ndim == 1 else vol

    def contact_volume_general(self, point):
        """α ∧ (dα)^n via repeated wedge; any odd dimension."""
        if self._top_form is None:
            top = self.alpha
            for _ in range(self.chart.dimension // 2):
                top = wedge(top, self.dalpha)
            self._top_form = top
        key = tuple(range(self.chart.dimension))
        return self._top_form.coefficient(key).evaluate(point)

    def _scale(self, a, A):
        return 1.0 + np.sqrt(np.sum(a * a, axis=0)) * np.sqrt(np.sum(A * A, axis=(0, 1)))

    def kernel(self, points) -> Tuple[np.ndarray, np.ndarray]:
        """Kernel direction k of dα with α(k) = volume, and the volume itself."""
        a, A = self.jet(points)
        k = np.stack([A[1, 2], -A[0, 2], A[0, 1]])
        vol = np.sum(a * k, axis=0)
        return k, vol

    def reeb_vector(self, points) -> np.ndarray:
        """Reeb field at one point (n,) or a batch (n, m); no domain checks."""
        if self.chart.dimension != 3:
            raise ChartError("Reeb fields are computed on 3-dimensional leaves only")
        k, vol = self.kernel(points)
        return k / vol

    def reeb_at(self, point) -> ReebSample:
        p = np.asarray(point, dtype=float)
        self._require_inside(p)
        if self.chart.dimension != 3:
            raise ChartError("Reeb fields are computed on 3-dimensional leaves only")
        a, A = self.jet(p)
        k = np.array([A[1, 2], -A[0, 2], A[0, 1]])
        vol = float(a @ k)
        if abs(vol) <= self.eps_contact * self._scale(a, A):
            raise NotContactError(p, vol)
        reeb = k / vol
        residuals = (abs(float(a @ reeb) - 1.0), float(np.max(np.abs(A @ reeb))))
        return ReebSample(tuple(p.tolist()), tuple(reeb.tolist()), residuals)

    def reeb_field(self) -> VectorField:
        return VectorField(self.chart, evaluator=self.reeb_vector, name=f"reeb:{self.name}")

    def alpha_of(self, points, vectors) -> np.ndarray:
        a, _ = self.jet(points)
        return np.sum(a * np.asarray(vectors, dtype=float), axis=0)


def verify_contact(cs: ContactStructure, grid: Union[int, Sequence[int]] = 20,
                   bounds: Optional[Sequence[Tuple[float, float]]] = None,
                   points: Optional[np.ndarray] = None) -> ContactReport:
    """
    Sample the contact condition on a grid (or explicit points).

    A sample passes when |vol| >= eps_contact * (1 + |α| |dα|).
    """
    pts = cs.chart.sample_grid(grid, bounds) if points is None else np.asarray(points, dtype=float)
    if pts.shape[1] == 0:
        raise ChartError("verify_contact got an empty sample set")
    if cs.chart.dimension == 3:
        a, A = cs.jet(pts)
        vol = a[0] * A[1, 2] - a[1] * A[0, 2] + a[2] * A[0, 1]
        scaled = np.abs(vol) / cs._scale(a, A)
    else:
        vol = np.asarray(cs.contact_volume_general(pts))
        scaled = np.abs(vol)
    worst = int(np.argmin(scaled))
    report = ContactReport(
        min_abs_volume=float(np.min(np.abs(vol))),
        min_scaled_volume=float(scaled[worst]),
        argmin=pts[:, worst].tolist(),
        samples=int(pts.shape[1]),
        threshold=cs.eps_contact,
        passed=bool(scaled[worst] >= cs.eps_contact),
    )
    logger.info("verify_contact %s: %s (min |vol| %.3e over %d samples)",
                cs.name, report.verdict, report.min_abs_volume, report.samples)
    return report


@dataclass
class KernelComparison:
    max_deviation: float
    min_alpha_of_field: float
    samples: int


def compare_with_kernel(cs: ContactStructure, x: VectorField, points) -> KernelComparison:
    """
    Compare the Reeb field with a field X spanning ker dα.

    The deviation is |R - X/α(X)|; the sign of α(X) is reported as sampled.
    """
    pts = np.asarray(points, dtype=float)
    xs = x(pts)
    alpha_x = cs.alpha_of(pts, xs)
    reeb = cs.reeb_vector(pts)
    deviation = np.max(np.abs(reeb - xs / alpha_x))
    return KernelComparison(float(deviation), float(np.min(alpha_x)), int(pts.shape[1]))


def _leaf_map(f: ChartMap, cs: ContactStructure) -> ChartMap:
    if f.target == cs.chart:
        return f
    tgt = f.target
    if tgt.dimension == cs.chart.dimension + 1 and tgt.coords[1:] == cs.chart.coords:
        # projection of ℝ × leaf onto the leaf
        return ChartMap(f.source, cs.chart, f.components[1:], name=f"pr∘{f.name}")
    raise ChartError(f"map {f.name!r} targets {tgt.name!r}, not the leaf or its symplectisation")


def horizontal_energy(f: ChartMap, cs: ContactStructure, grid: Union[int, Sequence[int]] = 32) -> float:
    """E^h(F) = ∫ F* dα."""
    leaf = _leaf_map(f, cs)
    value = integrate_form(leaf, cs.dalpha, grid)
    logger.debug("horizontal energy of %s: %.17g", f.name, value)
    return value


def _endpoints(loop: ChartMap) -> Tuple[np.ndarray, np.ndarray]:
    lo, hi = loop.source.bounds[0]
    period = loop.source.periods[0]
    end = lo + period if period is not None else hi
    return loop(np.array([[lo]]))[:, 0], loop(np.array([[end]]))[:, 0]


def boundary_energy(loop: ChartMap, cs: ContactStructure, nodes: int = 64, closure_tol: float = 1e-12) -> float:
    """∮ loop*α for a closed curve in the leaf."""
    if loop.source.dimension != 1:
        raise ChartError("boundary_energy needs a curve")
    leaf = _leaf_map(loop, cs)
    start, end = _endpoints(leaf)
    gap = cs.chart.distance(start, end)
    if gap > closure_tol * max(1.0, float(np.max(np.abs(start)))):
        raise OpenLoopError(f"loop {loop.name!r} does not close: endpoint gap {gap:.3e}")
    return line_integral(leaf, cs.alpha, nodes)


def boundary_loop(f: ChartMap, coord: str, value: float) -> ChartMap:
    """Restrict a surface map to the curve ``coord = value``."""
    src = f.source
    fixed = src.index(coord)
    free = 1 - fixed
    curve_chart = Chart(f"{src.name}|{coord}={value:g}", (src.coords[free],), (src.bounds[free],),
                        (src.periods[free],))
    components = [Expression.constant(value, curve_chart.coords) if i == fixed
                  else curve_chart.coordinate(src.coords[free]) for i in range(2)]
    return ChartMap(curve_chart, f.target, [c.compose(components) for c in f.components],
                    name=f"{f.name}|{coord}={value:g}")


def energy(f: ChartMap, cs: ContactStructure, radial: str = None, nodes: int = 64) -> float:
    """
    E(F) of a disc map through its boundary: the integral of α over the
    outer edge of the polar source chart.
    """
    src = f.source
    if src.dimension != 2:
        raise ChartError("energy needs a surface map")
    if radial is None:
        radial = next(c for c, p in zip(src.coords, src.periods) if p is None)
    outer = src.bounds[src.index(radial)][1]
    return boundary_energy(boundary_loop(f, radial, outer), cs, nodes)


@dataclass
class CharacteristicReport:
    """Singular points of ξ ∩ TΣ on a sampled surface and the Legendrian defect of its edge."""

    singular_points: List[List[float]]
    edge_defect: Optional[float]
    samples: int


def characteristic_singularities(f: ChartMap, cs: ContactStructure, grid: int = 41,
                                 tol: float = 1e-9, edge: Optional[Tuple[str, float]] = None
                                 ) -> CharacteristicReport:
    """Points where F*α vanishes (ξ tangent to the surface), sampled on a grid."""
    beta = pullback(_leaf_map(f, cs), cs.alpha)
    pts = f.source.sample_grid(grid)
    norm = np.zeros(pts.shape[1])
    for i in range(2):
        norm = norm + np.asarray(beta.coefficient((i,)).evaluate(pts)) ** 2
    norm = np.sqrt(norm)
    singular = pts[:, norm <= tol].T.tolist()
    defect = None
    if edge is not None:
        coord, value = edge
        curve = boundary_loop(f, coord, value)
        tangent = pullback(_leaf_map(curve, cs), cs.alpha).coefficient((0,))
        defect = float(np.max(np.abs(tangent.evaluate(curve.source.sample_grid(grid)))))
    return CharacteristicReport(singular, defect, int(pts.shape[1]))
