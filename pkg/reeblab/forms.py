"""
Exterior calculus on a single coordinate chart.

Forms keep their coefficients under strictly increasing index tuples; every
sign that arises from reordering goes through ``permutation_sign``.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss

from .exprs import Expression, ReebLabError, parse, real

logger = logging.getLogger(__name__)

Index = Tuple[int, ...]


class ChartError(ReebLabError):
    """Objects from different charts were combined, or a degree overflowed."""


class MapDomainError(ReebLabError):
    def __init__(self, message: str, point=None):
        self.point = None if point is None else np.asarray(point, dtype=float).tolist()
        if point is not None:
            message = f"{message}: {self.point}"
        super().__init__(message)


def permutation_sign(indices: Sequence[int]) -> Tuple[int, Index]:
    """
    Sort an index sequence and report the sign of the sorting permutation.

    Returns:
        (sign, sorted tuple); sign is 0 when an index repeats
    """
    items = list(indices)
    if len(set(items)) != len(items):
        return 0, tuple(sorted(items))
    sign = 1
    # insertion sort, counting transpositions
    for i in range(1, len(items)):
        j = i
        while j > 0 and items[j - 1] > items[j]:
            items[j - 1], items[j] = items[j], items[j - 1]
            sign = -sign
            j -= 1
    return sign, tuple(items)


@dataclass(frozen=True)
class Chart:
    """
    A coordinate chart with a box-shaped validity domain.

    ``periods[i]`` is None for an ordinary coordinate; a periodic coordinate
    lives in [bounds[i][0], bounds[i][0] + period).  An optional predicate
    expression further restricts the domain to where it is >= 0.
    """

    name: str
    coords: Tuple[str, ...]
    bounds: Tuple[Tuple[float, float], ...]
    periods: Tuple[Optional[float], ...] = ()
    predicate: Optional[Expression] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        object.__setattr__(self, "bounds", tuple((float(lo), float(hi)) for lo, hi in self.bounds))
        periods = tuple(self.periods) or (None,) * len(self.coords)
        object.__setattr__(self, "periods", tuple(None if p is None else float(p) for p in periods))
        n = len(self.coords)
        if n < 1:
            raise ChartError(f"chart {self.name!r} needs at least one coordinate")
        if len(self.bounds) != n or len(self.periods) != n:
            raise ChartError(f"chart {self.name!r}: bounds/periods do not match coordinates")
        for c, (lo, hi), p in zip(self.coords, self.bounds, self.periods):
            if p is not None and p <= 0:
                raise ChartError(f"chart {self.name!r}: period of {c} must be positive")
            if p is None and not lo < hi:
                raise ChartError(f"chart {self.name!r}: empty interval for {c}")

    @property
    def dimension(self) -> int:
        return len(self.coords)

    def index(self, coord: str) -> int:
        try:
            return self.coords.index(coord)
        except ValueError:
            raise ChartError(f"{coord!r} is not a coordinate of chart {self.name!r}")

    def coordinate(self, coord: str) -> Expression:
        return Expression.coordinate(coord, self.coords)

    def parse(self, source: str, **kwargs) -> Expression:
        return parse(source, self.coords, **kwargs)

    def is_periodic(self, i: int) -> bool:
        return self.periods[i] is not None

    def wrap(self, point) -> np.ndarray:
        """Reduce periodic coordinates into their fundamental interval."""
        p = np.array(point, dtype=float)
        for i, period in enumerate(self.periods):
            if period is not None:
                lo = self.bounds[i][0]
                p[i] = lo + np.mod(p[i] - lo, period)
        return p

    def delta(self, a, b) -> np.ndarray:
        """a - b with periodic components reduced to [-P/2, P/2)."""
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        for i, period in enumerate(self.periods):
            if period is not None:
                d[i] = np.mod(d[i] + 0.5 * period, period) - 0.5 * period
        return d

    def distance(self, a, b) -> float:
        return float(np.linalg.norm(self.delta(a, b)))

    def contains(self, point, atol: float = 1e-12):
        """Validity test; accepts one point (n,) or a batch (n, m)."""
        p = np.asarray(point, dtype=float)
        ok = np.ones(p.shape[1:], dtype=bool)
        for i, period in enumerate(self.periods):
            if period is None:
                lo, hi = self.bounds[i]
                ok &= (p[i] >= lo - atol) & (p[i] <= hi + atol)
        ok &= np.all(np.isfinite(p), axis=0)
        if self.predicate is not None and np.any(ok):
            values = [p[i] if p.ndim > 1 else float(p[i]) for i in range(self.dimension)]
            with np.errstate(all="ignore"):
                level = np.asarray(real(self.predicate.evaluate_values(values, strict=False)))
            ok &= np.nan_to_num(level, nan=-np.inf) >= -atol
        return bool(ok) if p.ndim == 1 else ok

    def sample_grid(self, shape: Union[int, Sequence[int]],
                    bounds: Optional[Sequence[Tuple[float, float]]] = None) -> np.ndarray:
        """
        Tensor grid of sample points, shape (n, N), filtered by the predicate.

        Periodic axes drop the duplicated endpoint.
        """
        n = self.dimension
        counts = [shape] * n if isinstance(shape, int) else list(shape)
        box = bounds or self.bounds
        axes = []
        for i in range(n):
            lo, hi = box[i]
            period = self.periods[i]
            if period is not None and (bounds is None or hi - lo >= period * (1 - 1e-12)):
                axes.append(np.linspace(lo, lo + period, counts[i], endpoint=False))
            elif counts[i] == 1:
                axes.append(np.array([0.5 * (lo + hi)]))
            else:
                axes.append(np.linspace(lo, hi, counts[i]))
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.ravel() for m in mesh])
        if self.predicate is not None:
            points = points[:, self.contains(points)]
        return points


def parse_basis(chart: Chart, label: str) -> Index:
    """Turn ``"dr^dtheta"`` (or ``"1"`` for functions) into an index tuple."""
    label = label.strip()
    if label in ("", "1"):
        return ()
    parts = [part.strip() for part in label.split("^")]
    indices = []
    for part in parts:
        if not part.startswith("d"):
            raise ChartError(f"bad basis element {part!r} in {label!r}")
        indices.append(chart.index(part[1:]))
    return tuple(indices)


def basis_label(chart: Chart, key: Index) -> str:
    return "^".join("d" + chart.coords[i] for i in key) or "1"


class DifferentialForm:
    """A k-form on a chart with Expression coefficients."""

    def __init__(self, chart: Chart, degree: int, coefficients: Mapping[Index, Expression] = None):
        if not 0 <= degree <= chart.dimension:
            raise ChartError(f"degree {degree} impossible on {chart.dimension}-dimensional chart")
        self.chart = chart
        self.degree = degree
        coeffs: Dict[Index, Expression] = {}
        for key, expr in (coefficients or {}).items():
            key = tuple(key)
            if len(key) != degree:
                raise ChartError(f"index {key} does not match degree {degree}")
            if any(i < 0 or i >= chart.dimension for i in key):
                raise ChartError(f"index {key} out of range on chart {chart.name!r}")
            sign, ordered = permutation_sign(key)
            if sign == 0:
                continue
            if not isinstance(expr, Expression):
                expr = Expression.constant(expr, chart.coords)
            if expr.coords != chart.coords:
                raise ChartError("coefficient coordinates differ from the chart")
            if ordered in coeffs:
                coeffs[ordered] = coeffs[ordered] + sign * expr
            else:
                coeffs[ordered] = expr if sign > 0 else -expr
        self.coefficients = {k: v for k, v in sorted(coeffs.items()) if not v.is_zero}

    @classmethod
    def from_strings(cls, chart: Chart, degree: int, coefficients: Mapping[str, str], **parse_kwargs):
        return cls(chart, degree, {
            parse_basis(chart, label): chart.parse(source, **parse_kwargs)
            for label, source in coefficients.items()
        })

    @classmethod
    def function(cls, expr: Expression, chart: Chart) -> "DifferentialForm":
        return cls(chart, 0, {(): expr})

    def __repr__(self):
        body = " + ".join(f"({e})*{basis_label(self.chart, k)}" for k, e in self.coefficients.items())
        return f"<{self.degree}-form on {self.chart.name}: {body or '0'}>"

    def to_strings(self) -> Dict[str, str]:
        return {basis_label(self.chart, k): str(e) for k, e in self.coefficients.items()}

    @property
    def is_zero(self) -> bool:
        return not self.coefficients

    def coefficient(self, key: Sequence[int]) -> Expression:
        sign, ordered = permutation_sign(key)
        expr = self.coefficients.get(ordered)
        if sign == 0 or expr is None:
            return Expression.constant(0.0, self.chart.coords)
        return expr if sign > 0 else -expr

    def _same_chart(self, other: "DifferentialForm"):
        if other.chart != self.chart:
            raise ChartError(f"forms live on charts {self.chart.name!r} and {other.chart.name!r}")

    def __add__(self, other: "DifferentialForm") -> "DifferentialForm":
        self._same_chart(other)
        if other.degree != self.degree:
            raise ChartError("cannot add forms of different degree")
        merged = dict(self.coefficients)
        for k, e in other.coefficients.items():
            merged[k] = merged[k] + e if k in merged else e
        return DifferentialForm(self.chart, self.degree, merged)

    def __neg__(self):
        return DifferentialForm(self.chart, self.degree, {k: -e for k, e in self.coefficients.items()})

    def __sub__(self, other: "DifferentialForm") -> "DifferentialForm":
        return self + (-other)

    def scale(self, factor: Union[Expression, float]) -> "DifferentialForm":
        return DifferentialForm(self.chart, self.degree, {k: e * factor for k, e in self.coefficients.items()})

    def coefficient_values(self, point) -> Dict[Index, np.ndarray]:
        return {k: e.evaluate(point) for k, e in self.coefficients.items()}

    def evaluate(self, point, vectors: Sequence[Sequence[float]] = ()) -> float:
        """ω_p(v_1, ..., v_k); multilinear and alternating by construction."""
        if len(vectors) != self.degree:
            raise ChartError(f"{self.degree}-form needs {self.degree} vectors")
        total = 0.0
        v = np.asarray(vectors, dtype=float).reshape(self.degree, self.chart.dimension)
        for key, expr in self.coefficients.items():
            minor = np.linalg.det(v[:, list(key)]) if key else 1.0
            total += expr.evaluate(point) * minor
        return float(total)


def wedge(omega: DifferentialForm, eta: DifferentialForm) -> DifferentialForm:
    omega._same_chart(eta)
    degree = omega.degree + eta.degree
    if degree > omega.chart.dimension:
        raise ChartError(f"wedge degree {degree} exceeds chart dimension {omega.chart.dimension}")
    acc: Dict[Index, Expression] = {}
    for i_key, a in omega.coefficients.items():
        for j_key, b in eta.coefficients.items():
            sign, key = permutation_sign(i_key + j_key)
            if sign == 0:
                continue
            term = a * b if sign > 0 else -(a * b)
            acc[key] = acc[key] + term if key in acc else term
    return DifferentialForm(omega.chart, degree, acc)


def d(omega: DifferentialForm) -> DifferentialForm:
    """Exterior derivative; partials are ``diff`` nodes evaluated by nested duals."""
    chart = omega.chart
    if omega.degree == chart.dimension:
        raise ChartError(f"d of a top-degree form on {chart.name!r} overflows the dimension")
    acc: Dict[Index, Expression] = {}
    for key, a in omega.coefficients.items():
        for j in range(chart.dimension):
            if j in key:
                continue
            partial = a.derivative(j)
            if partial.is_zero:
                continue
            sign, ordered = permutation_sign((j,) + key)
            term = partial if sign > 0 else -partial
            acc[ordered] = acc[ordered] + term if ordered in acc else term
    return DifferentialForm(chart, omega.degree + 1, acc)


class VectorField:
    """
    A vector field on a chart.

    Either Expression components (one per coordinate) or a numeric evaluator
    ``f(point) -> components`` accepting (n,) and (n, m) arrays.
    """

    def __init__(self, chart: Chart, components: Optional[Sequence[Expression]] = None,
                 evaluator: Optional[Callable] = None, name: str = ""):
        if components is None and evaluator is None:
            raise ChartError("vector field needs components or an evaluator")
        if components is not None:
            components = [c if isinstance(c, Expression) else Expression.constant(c, chart.coords)
                          for c in components]
            if len(components) != chart.dimension:
                raise ChartError(f"vector field needs {chart.dimension} components")
            if any(c.coords != chart.coords for c in components):
                raise ChartError("component coordinates differ from the chart")
        self.chart = chart
        self.components = components
        self.evaluator = evaluator
        self.name = name

    @classmethod
    def from_strings(cls, chart: Chart, components: Sequence[str], name: str = "", **parse_kwargs):
        return cls(chart, [chart.parse(c, **parse_kwargs) for c in components], name=name)

    def __call__(self, point) -> np.ndarray:
        if self.evaluator is not None:
            return np.asarray(self.evaluator(point), dtype=float)
        p = np.asarray(point, dtype=float)
        return np.stack([np.broadcast_to(c.evaluate(p), p.shape[1:]) for c in self.components]).astype(float)

    def _require_components(self):
        if self.components is None:
            raise ChartError(f"vector field {self.name!r} has no symbolic components")
        return self.components

    def apply(self, f: Expression) -> Expression:
        """Directional derivative X(f) as an expression."""
        total = Expression.constant(0.0, self.chart.coords)
        for i, c in enumerate(self._require_components()):
            total = total + c * f.derivative(i)
        return total


def lie_bracket(x: VectorField, y: VectorField) -> VectorField:
    if x.chart != y.chart:
        raise ChartError("vector fields live on different charts")
    xs, ys = x._require_components(), y._require_components()
    return VectorField(x.chart, [x.apply(ys[k]) - y.apply(xs[k]) for k in range(x.chart.dimension)],
                       name=f"[{x.name},{y.name}]")


def interior(x: VectorField, omega: DifferentialForm) -> DifferentialForm:
    """Contraction i_X ω in the first slot."""
    if x.chart != omega.chart:
        raise ChartError("vector field and form live on different charts")
    if omega.degree < 1:
        raise ChartError("cannot contract a 0-form")
    comps = x._require_components()
    acc: Dict[Index, Expression] = {}
    for key, a in omega.coefficients.items():
        for pos, idx in enumerate(key):
            if comps[idx].is_zero:
                continue
            rest = key[:pos] + key[pos + 1:]
            term = comps[idx] * a
            term = term if pos % 2 == 0 else -term
            acc[rest] = acc[rest] + term if rest in acc else term
    return DifferentialForm(omega.chart, omega.degree - 1, acc)


class ChartMap:
    """A map between charts given by target-coordinate expressions in source coordinates."""

    def __init__(self, source: Chart, target: Chart, components: Sequence[Expression], name: str = ""):
        if len(components) != target.dimension:
            raise ChartError(f"map needs {target.dimension} components, got {len(components)}")
        comps = []
        for c in components:
            if not isinstance(c, Expression):
                c = Expression.constant(c, source.coords)
            if c.coords != source.coords:
                raise ChartError("map components must be expressions in the source coordinates")
            comps.append(c)
        self.source = source
        self.target = target
        self.components = comps
        self.name = name

    @classmethod
    def from_strings(cls, source: Chart, target: Chart, components: Sequence[str], name: str = "", **kw):
        return cls(source, target, [source.parse(c, **kw) for c in components], name=name)

    @classmethod
    def identity(cls, chart: Chart) -> "ChartMap":
        return cls(chart, chart, [chart.coordinate(c) for c in chart.coords], name="id")

    def __call__(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        return np.stack([np.broadcast_to(c.evaluate(p), p.shape[1:]) for c in self.components]).astype(float)

    def jacobian(self, point) -> np.ndarray:
        return np.stack([c.gradient(point) for c in self.components])

    def check_image(self, points):
        """Raise MapDomainError for the first sample whose image leaves the target domain."""
        p = np.asarray(points, dtype=float)
        batch = p if p.ndim > 1 else p[:, None]
        image = self(batch)
        ok = np.atleast_1d(self.target.contains(image))
        if not np.all(ok):
            bad = int(np.argmin(ok))
            raise MapDomainError(f"image of {self.name or 'map'} leaves chart {self.target.name!r} at source point",
                                 batch[:, bad])
        return image


def pullback(f: ChartMap, omega: DifferentialForm) -> DifferentialForm:
    """F*ω = Σ (a_I ∘ F) dF^{i1} ∧ ... ∧ dF^{ik}."""
    if omega.chart != f.target:
        raise ChartError(f"form lives on {omega.chart.name!r}, map targets {f.target.name!r}")
    if omega.degree > f.source.dimension:
        raise ChartError(f"cannot pull a {omega.degree}-form back to a {f.source.dimension}-dimensional chart")
    differentials = [d(DifferentialForm.function(c, f.source)) for c in f.components]
    total = DifferentialForm(f.source, omega.degree, {})
    for key, a in omega.coefficients.items():
        term = DifferentialForm.function(a.compose(f.components), f.source)
        for i in key:
            term = wedge(term, differentials[i])
        total = total + term
    return total


def _axis_rule(chart: Chart, i: int, nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    lo, hi = chart.bounds[i]
    period = chart.periods[i]
    if period is not None:
        x = np.linspace(lo, lo + period, nodes, endpoint=False)
        return x, np.full(nodes, period / nodes)
    x, w = leggauss(nodes)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def _quadrature(chart: Chart, nodes: Union[int, Sequence[int]]):
    counts = [nodes] * chart.dimension if isinstance(nodes, int) else list(nodes)
    rules = [_axis_rule(chart, i, counts[i]) for i in range(chart.dimension)]
    mesh = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    weights = np.ones_like(mesh[0])
    for axis, (_, w) in enumerate(rules):
        shape = [1] * chart.dimension
        shape[axis] = len(w)
        weights = weights * w.reshape(shape)
    return np.stack([m.ravel() for m in mesh]), weights.ravel()


def integrate_form(f: ChartMap, omega: DifferentialForm, grid: Union[int, Sequence[int]] = 32) -> float:
    """
    Integrate a 2-form over the image of a 2-dimensional source chart.

    Non-periodic axes use Gauss-Legendre nodes, periodic axes the trapezoid rule.
    """
    if f.source.dimension != 2 or omega.degree != 2:
        raise ChartError("integrate_form needs a 2-dimensional source and a 2-form")
    beta = pullback(f, omega)
    points, weights = _quadrature(f.source, grid)
    f.check_image(points)
    coeff = beta.coefficient((0, 1))
    values = coeff.evaluate(points)
    total = float(np.dot(weights, values))
    logger.debug("integrate_form %s over %s: %d nodes -> %.17g", f.name, f.source.name, len(weights), total)
    return total


def line_integral(curve: ChartMap, omega: DifferentialForm, nodes: int = 64) -> float:
    """∫_curve ω for a 1-form along a map from a 1-dimensional chart."""
    if curve.source.dimension != 1 or omega.degree != 1:
        raise ChartError("line_integral needs a curve and a 1-form")
    beta = pullback(curve, omega)
    points, weights = _quadrature(curve.source, nodes)
    curve.check_image(points)
    return float(np.dot(weights, beta.coefficient((0,)).evaluate(points)))


def product_chart(chart: Chart, coord: str = "a", bounds: Tuple[float, float] = (-50.0, 50.0),
                  name: Optional[str] = None) -> Chart:
    """The chart ℝ × chart with the new coordinate first."""
    predicate = chart.predicate.rebase((coord,) + chart.coords) if chart.predicate is not None else None
    return Chart(name or f"R x {chart.name}", (coord,) + chart.coords, (bounds,) + chart.bounds,
                 (None,) + chart.periods, predicate)


def lift_form(omega: DifferentialForm, chart: Chart) -> DifferentialForm:
    """Re-express a form on a chart that contains all of its coordinates."""
    mapping = [chart.index(c) for c in omega.chart.coords]
    return DifferentialForm(chart, omega.degree, {
        tuple(mapping[i] for i in key): e.rebase(chart.coords) for key, e in omega.coefficients.items()
    })


def symplectisation_form(alpha: DifferentialForm, coord: str = "a") -> DifferentialForm:
    """ω = d(e^a α) on ℝ × leaf."""
    chart = product_chart(alpha.chart, coord)
    lifted = lift_form(alpha, chart)
    ea = chart.parse(f"exp({coord})")
    return d(wedge(DifferentialForm.function(ea, chart), lifted))
