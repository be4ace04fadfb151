"""
Scenario catalogue and loader.

A scenario is pure data: charts, forms, metrics, named maps, certificates,
orbit fixtures, an orbit search box and tolerances, all stored as a JSON
document tagged ``reeb-lab/scenario/v1``.  The built-in scenarios are
generated as such documents and then loaded like any user file, so
``Scenario.config`` always serialises back to something ``load_config``
accepts.
"""
import copy
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .contact import ContactStructure
from .exprs import Expression, ParseError, ReebLabError, constant_value, parse
from .flow import (CertificateReport, ClosedOrbit, OrbitSearchOptions, certify_monotone, find_closed_orbits,
                   integrate, seed_points)
from .forms import Chart, ChartError, ChartMap, DifferentialForm, VectorField
from .geodesics import Metric, geodesic_field, liouville_unit_form
from .suspension import radial_reparametrisation, suspension_leaf

logger = logging.getLogger(__name__)

SCHEMA = "reeb-lab/scenario/v1"

DEFAULT_TOLERANCES = {
    "contact": 1e-8,
    "integrate": 1e-10,
    "orbit": 1e-9,
    "newton": 1e-10,
    "capture": 1e-2,
    "dedup": 1e-4,
    "certificate": 0.0,
}

TWO_PI = "2*pi"


class ScenarioError(ReebLabError):
    """Unknown scenario id or an override outside its documented range."""


class ConfigError(ReebLabError):
    def __init__(self, path: str, field_name: str, message: str):
        self.path = path
        self.field = field_name
        super().__init__(f"{path}: {field_name}: {message}")


@dataclass
class CertificateSpec:
    name: str
    field: str
    functional: Expression
    chart: Chart
    bounds: List[Tuple[float, float]]
    grid: List[int]
    eps: float
    predicate: Optional[Expression] = None

    def points(self) -> np.ndarray:
        pts = self.chart.sample_grid(self.grid, self.bounds)
        if self.predicate is not None:
            pts = pts[:, np.asarray(self.predicate.evaluate(pts)) >= 0]
        return pts

    def region(self) -> Dict:
        return {"chart": self.chart.name, "bounds": [list(b) for b in self.bounds], "grid": list(self.grid)}


@dataclass
class Fixture:
    name: str
    field: str
    point: List[float]
    period: float
    tolerance: float
    provenance: str = ""


@dataclass
class FixtureResult:
    name: str
    residual: float
    tolerance: float

    @property
    def verdict(self) -> str:
        return "PASS" if self.residual <= self.tolerance else "FAIL"

    def to_dict(self) -> Dict:
        return {"name": self.name, "residual": self.residual, "tolerance": self.tolerance, "verdict": self.verdict}


@dataclass
class SearchSpec:
    field: str
    box: List[Tuple[float, float]]
    grid: List[int]
    t_max: float
    frozen: Tuple[str, ...] = ()
    expect: str = "none"  # "none" or "orbits"


class Scenario:
    """A fully instantiated scenario; immutable after construction."""

    def __init__(self, config: Dict, source: str):
        self.config = config
        self.source = source
        self.id: str = config["id"]
        self.description: str = config.get("description", "")
        self.citation: str = config.get("citation", "")
        self.parameters: Dict[str, float] = {}
        self.ranges: Dict[str, Tuple[float, float]] = {}
        self.leaf: Optional[Dict] = config.get("leaf")
        self.functions: Dict = {}
        self.definitions: Dict[str, str] = {}
        self.charts: Dict[str, Chart] = {}
        self.forms: Dict[str, DifferentialForm] = {}
        self.metrics: Dict[str, Metric] = {}
        self.fields: Dict[str, VectorField] = {}
        self.maps: Dict[str, ChartMap] = {}
        self.contacts: Dict[str, ContactStructure] = {}
        self.primary: Optional[str] = None
        self.certificates: List[CertificateSpec] = []
        self.fixtures: List[Fixture] = []
        self.search: Optional[SearchSpec] = None
        self.tolerances: Dict[str, float] = dict(DEFAULT_TOLERANCES)

    def __repr__(self):
        return f"Scenario({self.id!r}, parameters={self.parameters})"

    @property
    def contact(self) -> Optional[ContactStructure]:
        return self.contacts.get(self.primary) if self.primary else None

    def to_json(self) -> str:
        return json.dumps(self.config, indent=2, sort_keys=True)

    def field(self, spec: str) -> VectorField:
        """Resolve ``reeb:<form>``, ``geodesic:<metric>``, ``cogeodesic:<metric>`` or ``field:<name>``."""
        kind, _, name = spec.partition(":")
        if kind == "reeb":
            if name not in self.contacts:
                raise ScenarioError(f"{self.id}: no contact form {name!r}")
            return self.contacts[name].reeb_field()
        if kind in ("geodesic", "cogeodesic"):
            if name not in self.metrics:
                raise ScenarioError(f"{self.id}: no metric {name!r}")
            metric = self.metrics[name]
            if kind == "geodesic":
                return geodesic_field(metric)
            return liouville_unit_form(metric, self.tolerances["contact"]).reeb_field()
        if kind == "field" and name in self.fields:
            return self.fields[name]
        raise ScenarioError(f"{self.id}: cannot resolve field {spec!r}")

    def run_certificates(self, jobs: int = 1) -> List[CertificateReport]:
        reports = []
        for spec in self.certificates:
            reports.append(certify_monotone(self.field(spec.field), spec.functional, spec.points(), spec.eps,
                                            name=spec.name, region=spec.region(), jobs=jobs))
        return reports

    def verify_fixtures(self) -> List[FixtureResult]:
        results = []
        for fx in self.fixtures:
            x = self.field(fx.field)
            traj = integrate(x, fx.point, fx.period, tol=min(self.tolerances["integrate"], 1e-12))
            residual = x.chart.distance(traj.end, fx.point) if traj.status == "complete" else math.inf
            result = FixtureResult(fx.name, float(residual), fx.tolerance)
            if result.verdict != "PASS":
                logger.warning("fixture %s of %s: residual %.3e exceeds %.1e", fx.name, self.id, residual,
                               fx.tolerance)
            results.append(result)
        return results

    def search_options(self, t_max: Optional[float] = None, jobs: int = 1) -> OrbitSearchOptions:
        tol = self.tolerances
        spec = self.search
        return OrbitSearchOptions(
            t_max=t_max if t_max is not None else (spec.t_max if spec else 200.0),
            tol_orbit=tol["orbit"], capture=tol["capture"], newton_tol=tol["newton"], dedup=tol["dedup"],
            frozen=tuple(spec.frozen) if spec else (), jobs=jobs)

    def search_seeds(self, grid: Optional[Sequence[int]] = None, mode: str = "grid") -> np.ndarray:
        if self.search is None:
            raise ScenarioError(f"{self.id} declares no orbit search")
        x = self.field(self.search.field)
        return seed_points(x.chart, self.search.box, list(grid or self.search.grid), mode)

    def find_orbits(self, grid: Optional[Sequence[int]] = None, t_max: Optional[float] = None,
                    jobs: int = 1, mode: str = "grid") -> List[ClosedOrbit]:
        x = self.field(self.search.field) if self.search else None
        if x is None:
            raise ScenarioError(f"{self.id} declares no orbit search")
        return find_closed_orbits(x, self.search_seeds(grid, mode), self.search_options(t_max, jobs),
                                  parameters=self.parameters)


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _number(value, params: Mapping[str, float], path: str, where: str) -> float:
    if isinstance(value, str) and value.strip().lstrip("+-") == "inf":
        return -math.inf if value.strip().startswith("-") else math.inf
    try:
        return constant_value(value, params)
    except (ParseError, TypeError, ValueError) as err:
        raise ConfigError(path, where, f"not a number: {err}")


def _require(obj: Mapping, key: str, path: str, where: str):
    if not isinstance(obj, Mapping) or key not in obj:
        raise ConfigError(path, f"{where}.{key}" if where else key, "missing")
    return obj[key]


def _special_functions(config: Dict, params: Mapping[str, float], path: str) -> Dict:
    functions = {}
    for k, spec in enumerate(config.get("special", [])):
        where = f"special[{k}]"
        kind = _require(spec, "kind", path, where)
        name = _require(spec, "name", path, where)
        if kind == "suspension-leaf":
            t = _number(_require(spec, "t", path, where), params, path, f"{where}.t")
            eps_phi = _number(_require(spec, "eps_phi", path, where), params, path, f"{where}.eps_phi")
            functions[name] = suspension_leaf(t, eps_phi, name)
        elif kind == "radial-reparametrisation":
            functions[name] = radial_reparametrisation(name)
        else:
            raise ConfigError(path, f"{where}.kind", f"unknown special function kind {kind!r}")
    return functions


def _chart(spec: Dict, params, parse_kw, path: str, where: str) -> Chart:
    name = _require(spec, "name", path, where)
    coords = tuple(_require(spec, "coords", path, where))
    bounds_raw = _require(spec, "bounds", path, where)
    if len(bounds_raw) != len(coords):
        raise ConfigError(path, f"{where}.bounds", "one [lo, hi] pair per coordinate")
    bounds = [(_number(lo, params, path, f"{where}.bounds[{i}]"), _number(hi, params, path, f"{where}.bounds[{i}]"))
              for i, (lo, hi) in enumerate(bounds_raw)]
    periods_raw = spec.get("periods") or [None] * len(coords)
    periods = [None if p is None else _number(p, params, path, f"{where}.periods[{i}]")
               for i, p in enumerate(periods_raw)]
    predicate = None
    if spec.get("predicate"):
        predicate = _parse(spec["predicate"], coords, parse_kw, path, f"{where}.predicate")
    try:
        return Chart(name, coords, bounds, periods, predicate)
    except ChartError as err:
        raise ConfigError(path, where, str(err))


def _parse(source, coords, parse_kw, path: str, where: str) -> Expression:
    try:
        return parse(source, coords, **parse_kw)
    except ParseError as err:
        raise ConfigError(path, where, f"parse error: {err}")


def _lookup(table: Mapping, name: str, path: str, where: str):
    if name not in table:
        raise ConfigError(path, where, f"unknown name {name!r}")
    return table[name]


def scenario_from_config(config: Dict, source: str = "<memory>",
                         overrides: Optional[Mapping[str, float]] = None) -> Scenario:
    """Instantiate a scenario document; ``source`` names it in error messages."""
    path = source
    if not isinstance(config, Mapping):
        raise ConfigError(path, "<root>", "scenario must be a JSON object")
    if config.get("schema") != SCHEMA:
        raise ConfigError(path, "schema", f"expected {SCHEMA!r}, got {config.get('schema')!r}")
    _require(config, "id", path, "")
    config = copy.deepcopy(dict(config))
    sc = Scenario(config, source)

    params = {}
    for name, value in config.get("parameters", {}).items():
        params[name] = _number(value, {}, path, f"parameters.{name}")
    for name, rng in config.get("ranges", {}).items():
        sc.ranges[name] = (float(rng[0]), float(rng[1]))
    for name, value in (overrides or {}).items():
        if name not in params:
            raise ScenarioError(f"{sc.id}: unknown parameter {name!r}")
        params[name] = float(value)
    for name, value in params.items():
        if name in sc.ranges:
            lo, hi = sc.ranges[name]
            if not lo <= value <= hi:
                raise ScenarioError(f"{sc.id}: parameter {name}={value:g} outside [{lo:g}, {hi:g}]")
    sc.parameters = params
    config["parameters"] = dict(params)

    sc.tolerances.update({k: float(v) for k, v in config.get("tolerances", {}).items()})
    sc.functions = _special_functions(config, params, path)
    sc.definitions = dict(config.get("definitions", {}))
    parse_kw = {"definitions": sc.definitions, "parameters": params, "functions": sc.functions}

    for k, spec in enumerate(_require(config, "charts", path, "")):
        chart = _chart(spec, params, parse_kw, path, f"charts[{k}]")
        sc.charts[chart.name] = chart

    for k, spec in enumerate(config.get("forms", [])):
        where = f"forms[{k}]"
        chart = _lookup(sc.charts, _require(spec, "chart", path, where), path, f"{where}.chart")
        coeffs = {}
        for label, src in _require(spec, "coefficients", path, where).items():
            coeffs[label] = src
        try:
            form = DifferentialForm.from_strings(chart, int(spec.get("degree", 1)), coeffs, **parse_kw)
        except ParseError as err:
            raise ConfigError(path, f"{where}.coefficients", f"parse error: {err}")
        except ChartError as err:
            raise ConfigError(path, where, str(err))
        sc.forms[_require(spec, "name", path, where)] = form

    for k, spec in enumerate(config.get("metrics", [])):
        where = f"metrics[{k}]"
        chart = _lookup(sc.charts, _require(spec, "chart", path, where), path, f"{where}.chart")
        try:
            metric = Metric.from_strings(chart, _require(spec, "components", path, where),
                                         name=spec["name"], **parse_kw)
        except ParseError as err:
            raise ConfigError(path, f"{where}.components", f"parse error: {err}")
        except ReebLabError as err:
            raise ConfigError(path, where, str(err))
        sc.metrics[spec["name"]] = metric

    for k, spec in enumerate(config.get("fields", [])):
        where = f"fields[{k}]"
        chart = _lookup(sc.charts, _require(spec, "chart", path, where), path, f"{where}.chart")
        comps = [_parse(src, chart.coords, parse_kw, path, f"{where}.components[{i}]")
                 for i, src in enumerate(_require(spec, "components", path, where))]
        sc.fields[spec["name"]] = VectorField(chart, comps, name=spec["name"])

    for k, spec in enumerate(config.get("maps", [])):
        where = f"maps[{k}]"
        src = _lookup(sc.charts, _require(spec, "source", path, where), path, f"{where}.source")
        tgt = _lookup(sc.charts, _require(spec, "target", path, where), path, f"{where}.target")
        comps = [_parse(c, src.coords, parse_kw, path, f"{where}.components[{i}]")
                 for i, c in enumerate(_require(spec, "components", path, where))]
        try:
            sc.maps[spec["name"]] = ChartMap(src, tgt, comps, name=spec["name"])
        except ChartError as err:
            raise ConfigError(path, where, str(err))

    contact = config.get("contact")
    if contact:
        form_names = [contact["form"]] + list(contact.get("companions", []))
        for name in form_names:
            form = _lookup(sc.forms, name, path, "contact.form")
            eps = float(contact.get("eps", sc.tolerances["contact"]))
            sc.contacts[name] = ContactStructure(form, params, eps, name=f"{sc.id}:{name}")
        sc.primary = contact["form"]

    for k, spec in enumerate(config.get("certificates", [])):
        where = f"certificates[{k}]"
        region = _require(spec, "region", path, where)
        field_spec = _require(spec, "field", path, where)
        try:
            field_chart = sc.field(field_spec).chart
        except ScenarioError as err:
            raise ConfigError(path, f"{where}.field", str(err))
        bounds = [(_number(lo, params, path, f"{where}.region.bounds"), _number(hi, params, path, f"{where}.region.bounds"))
                  for lo, hi in _require(region, "bounds", path, f"{where}.region")]
        if len(bounds) != field_chart.dimension:
            raise ConfigError(path, f"{where}.region.bounds", "one pair per coordinate of the field's chart")
        grid = [int(g) for g in region.get("grid", [20] * field_chart.dimension)]
        predicate = None
        if region.get("predicate"):
            predicate = _parse(region["predicate"], field_chart.coords, parse_kw, path, f"{where}.region.predicate")
        w = _parse(_require(spec, "W", path, where), field_chart.coords, parse_kw, path, f"{where}.W")
        eps = float(spec.get("eps", sc.tolerances["certificate"]))
        sc.certificates.append(CertificateSpec(spec["name"], field_spec, w, field_chart, bounds, grid, eps,
                                               predicate))

    for k, spec in enumerate(config.get("fixtures", [])):
        where = f"fixtures[{k}]"
        point = [_number(v, params, path, f"{where}.point") for v in _require(spec, "point", path, where)]
        sc.fixtures.append(Fixture(spec["name"], _require(spec, "field", path, where), point,
                                   _number(_require(spec, "period", path, where), params, path, f"{where}.period"),
                                   float(spec.get("tolerance", sc.tolerances["orbit"])),
                                   spec.get("provenance", "")))

    search = config.get("search")
    if search:
        box = [(_number(lo, params, path, "search.box"), _number(hi, params, path, "search.box"))
               for lo, hi in _require(search, "box", path, "search")]
        sc.search = SearchSpec(_require(search, "field", path, "search"), box,
                               [int(g) for g in search.get("grid", [6] * len(box))],
                               float(search.get("tmax", 200.0)), tuple(search.get("frozen", ())),
                               search.get("expect", "none"))
    logger.debug("loaded scenario %s from %s", sc.id, source)
    return sc


def load_config(path: str, overrides: Optional[Mapping[str, float]] = None) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(path, f"line {err.lineno}", f"invalid JSON: {err.msg}")
    except OSError as err:
        raise ConfigError(path, "<file>", str(err))
    return scenario_from_config(config, path, overrides)


# ---------------------------------------------------------------------------
# Built-in catalogue
# ---------------------------------------------------------------------------

def _doc(sid: str, description: str, citation: str, parameters: Dict, ranges: Dict, **rest) -> Dict:
    doc = {"schema": SCHEMA, "id": sid, "description": description, "citation": citation,
           "parameters": parameters, "ranges": ranges}
    doc.update(rest)
    return doc


def _tight_r3(p: Dict[str, float]) -> Dict:
    n = int(p["n"])
    if n == 1:
        coords, alpha = ["x", "y", "z"], {"dz": "1", "dy": "-x"}
    else:
        coords = [c for i in range(1, n + 1) for c in (f"x{i}", f"y{i}")] + ["z"]
        alpha = {"dz": "1"}
        alpha.update({f"dy{i}": f"-x{i}" for i in range(1, n + 1)})
    doc = _doc(
        "tight-r3", "Standard tight contact form dz - sum x_i dy_i", "standard tight contact structure",
        p, {"n": [1, 2]},
        charts=[{"name": "R", "coords": coords, "bounds": [[-1, 1]] * len(coords)}],
        forms=[{"name": "alpha", "chart": "R", "degree": 1, "coefficients": alpha}],
        contact={"form": "alpha"},
    )
    if n == 1:
        doc["certificates"] = [{
            "name": "z-increasing", "field": "reeb:alpha", "W": "z", "eps": 0.5,
            "region": {"bounds": [[-1, 1], [-1, 1], [-1, 1]], "grid": [10, 10, 10]},
        }]
    return doc


_OT_DEFS = {
    "f": "-eps*tanh(z)",
    "phi": "smoothstep5(r, phi_a, delta)",
}

_OT_CART_DEFS = {
    "q": "x^2 + y^2",
    "cosr": "1 - q/2 + q^2/24 - q^3/720 + q^4/40320",
    "sincr": "1 - q/6 + q^2/120 - q^3/5040 + q^4/362880",
    "fz": "-eps*tanh(z)",
    "w": "sincr + piecewise(q < phi_a^2, 0, fz*smoothstep5(sqrt(q), phi_a, delta)/q)",
}


def _ot_r3(p: Dict[str, float]) -> Dict:
    defs = dict(_OT_DEFS)
    defs.update(_OT_CART_DEFS)
    cyl_box = [["1e-3", "3*pi"], [0, TWO_PI], [-5, 5]]
    return _doc(
        "ot-r3", "Perturbed overtwisted-at-infinity form cos r dz + (r sin r + f(z) phi(r)) dtheta",
        "perturbed overtwisted form with no closed Reeb orbits", p,
        {"eps": [0.0, 0.005], "delta": [0.05, 0.5], "phi_a": [0.005, 0.04]},
        definitions=defs,
        charts=[
            {"name": "cyl", "coords": ["r", "theta", "z"], "bounds": cyl_box, "periods": [None, TWO_PI, None]},
            {"name": "cart", "coords": ["x", "y", "z"], "bounds": [["-delta", "delta"], ["-delta", "delta"], [-5, 5]],
             "predicate": "delta^2 - x^2 - y^2"},
            {"name": "disc", "coords": ["rho", "vartheta"], "bounds": [[0, "pi/2"], [0, TWO_PI]],
             "periods": [None, TWO_PI]},
            {"name": "disc_pi", "coords": ["rho", "vartheta"], "bounds": [[0, "pi"], [0, TWO_PI]],
             "periods": [None, TWO_PI]},
        ],
        forms=[
            {"name": "alpha", "chart": "cyl", "degree": 1,
             "coefficients": {"dz": "cos(r)", "dtheta": "r*sin(r) + f*phi"}},
            {"name": "alpha_cart", "chart": "cart", "degree": 1,
             "coefficients": {"dx": "-y*w", "dy": "x*w", "dz": "cosr"}},
        ],
        fields=[{"name": "X", "chart": "cyl",
                 "components": ["-diff(f, z)*phi", "sin(r)", "sin(r) + r*cos(r) + diff(phi, r)*f"]}],
        maps=[
            {"name": "disc", "source": "disc", "target": "cyl", "components": ["rho", "vartheta", "0"]},
            {"name": "disc_pi", "source": "disc_pi", "target": "cyl", "components": ["rho", "vartheta", "0"]},
        ],
        contact={"form": "alpha", "companions": ["alpha_cart"]},
        certificates=[
            {"name": "r-nondecreasing", "field": "reeb:alpha", "W": "r", "eps": 0.0,
             "region": {"bounds": cyl_box, "grid": [40, 8, 40]}},
            {"name": "r-increasing-outside", "field": "reeb:alpha", "W": "r", "eps": 1e-10,
             "region": {"bounds": [["delta", "3*pi"], [0, TWO_PI], [-5, 5]], "grid": [40, 8, 40]}},
            {"name": "z-increasing-collar", "field": "reeb:alpha", "W": "z", "eps": 1e-3,
             "region": {"bounds": [["delta/2", "delta"], [0, TWO_PI], [-5, 5]], "grid": [10, 8, 20]}},
            {"name": "z-increasing-core", "field": "reeb:alpha_cart", "W": "z", "eps": 1e-3,
             "region": {"bounds": [["-delta/2", "delta/2"], ["-delta/2", "delta/2"], [-5, 5]], "grid": [11, 11, 20],
                        "predicate": "delta^2/4 - x^2 - y^2"}},
        ],
        search={"field": "reeb:alpha", "box": [[0.2, "3*pi - 0.2"], [0, "5*pi/3"], [-4, 4]], "grid": [6, 6, 6],
                "tmax": 200, "expect": "none"},
    )


_S2_DEFS = {
    "g0": "z*(z - 2*pi)*sin(z)",
    "phi": ("smoothstep5(z, 0.3, pi/2 - 0.3) - smoothstep5(z, pi/2 + 0.3, pi - 0.3)"
            " + smoothstep5(z, pi + 0.3, 3*pi/2 - 0.3) - smoothstep5(z, 3*pi/2 + 0.3, 2*pi - 0.3)"),
}


def _band_certificates(field: str, s_box) -> List[Dict]:
    theta = [0, TWO_PI]
    return [
        {"name": "z-nondecreasing", "field": field, "W": "z", "eps": 0.0,
         "region": {"bounds": [["0.05", "2*pi - 0.05"], theta, s_box], "grid": [60, 6, 21]}},
        {"name": "z-increasing-north-core", "field": field, "W": "z", "eps": 1e-14,
         "region": {"bounds": [[0.4, "pi - 0.4"], theta, s_box], "grid": [30, 6, 21]}},
        {"name": "z-increasing-south-core", "field": field, "W": "z", "eps": 1e-14,
         "region": {"bounds": [["pi + 0.4", "2*pi - 0.4"], theta, s_box], "grid": [30, 6, 21]}},
        {"name": "s-increasing-pole", "field": field, "W": "s", "eps": 1e-3,
         "region": {"bounds": [[0.05, 0.4], theta, s_box], "grid": [10, 6, 21]}},
        {"name": "s-decreasing-equator", "field": field, "W": "-s", "eps": 1e-3,
         "region": {"bounds": [["pi - 0.4", "pi + 0.4"], theta, s_box], "grid": [10, 6, 21]}},
        {"name": "s-increasing-antipole", "field": field, "W": "s", "eps": 1e-3,
         "region": {"bounds": [["2*pi - 0.4", "2*pi - 0.05"], theta, s_box], "grid": [10, 6, 21]}},
    ]


def _s2xr(p: Dict[str, float]) -> Dict:
    defs = dict(_S2_DEFS)
    defs["f"] = "eps*tanh(s/4)"
    return _doc(
        "s2xr", "Perturbed form on S^2 x R: cos z ds + (z(z - 2pi) sin z + f(s) phi(z)) dtheta",
        "contact form on S^2 x R whose Reeb flow has no closed orbits", p, {"eps": [0.0, 0.02]},
        definitions=defs,
        charts=[{"name": "band", "coords": ["z", "theta", "s"],
                 "bounds": [["0.05", "2*pi - 0.05"], [0, TWO_PI], [-10, 10]], "periods": [None, TWO_PI, None]}],
        forms=[{"name": "alpha", "chart": "band", "degree": 1,
                "coefficients": {"ds": "cos(z)", "dtheta": "g0 + f*phi"}}],
        contact={"form": "alpha"},
        certificates=_band_certificates("reeb:alpha", [-10, 10]),
        search={"field": "reeb:alpha", "box": [[0.1, "2*pi - 0.1"], [0, "5*pi/3"], [-5, 5]], "grid": [6, 6, 6],
                "tmax": 200, "expect": "none"},
    )


def _sharp_s2t2(p: Dict[str, float]) -> Dict:
    t = p["t"]
    compact = float(t).is_integer()
    step = "flatstep" if p.get("flat_bump", 0) >= 0.5 else "smoothstep9"
    defs = dict(_S2_DEFS)
    defs["hs"] = "leaf_h(s)"
    defs["F"] = f"eps*piecewise(hs <= 1, {step}(hs, 0, 1), {step}(2 - hs, 0, 1))"
    if compact:
        s_bounds, s_period, s_box = [0, TWO_PI], TWO_PI, [0, "5*pi/3"]
    else:
        s_bounds, s_period, s_box = [-500, 500], None, [-5, 5]
    doc = _doc(
        "sharp-s2t2", "Leaves of the suspension foliation of S^2 x S^1 x S^1 with leafwise forms "
                      "cos z ds + (z(z - 2pi) sin z + F(h_t(s)) phi(z)) dtheta",
        "suspension foliation: closed orbits on compact leaves only", p,
        {"t": [0.0, 2.0], "eps": [0.0, 0.02], "eps_phi": [0.01, 0.5], "flat_bump": [0, 1]},
        leaf={"name": "t", "range": [0, 2], "value": t, "compact": compact},
        special=[{"kind": "suspension-leaf", "name": "leaf_h", "t": "t", "eps_phi": "eps_phi"}],
        definitions=defs,
        charts=[
            {"name": "leaf", "coords": ["z", "theta", "s"],
             "bounds": [["0.05", "2*pi - 0.05"], [0, TWO_PI], s_bounds], "periods": [None, TWO_PI, s_period]},
            {"name": "cylinder", "coords": ["a", "tau"], "bounds": [[0, 1], [0, TWO_PI]], "periods": [None, TWO_PI]},
            {"name": "symplectisation", "coords": ["a", "z", "theta", "s"],
             "bounds": [[-50, 50], ["0.05", "2*pi - 0.05"], [0, TWO_PI], s_bounds],
             "periods": [None, None, TWO_PI, s_period]},
        ],
        forms=[{"name": "alpha", "chart": "leaf", "degree": 1,
                "coefficients": {"ds": "cos(z)", "dtheta": "g0 + F*phi"}}],
        contact={"form": "alpha"},
        search={"field": "reeb:alpha", "box": [["pi - 2", "pi + 3"], [0, "5*pi/3"], s_box], "grid": [6, 6, 6],
                "tmax": 200, "expect": "orbits" if compact else "none"},
    )
    if compact:
        doc["fixtures"] = [{"name": "equator-circle", "field": "reeb:alpha", "point": ["pi", 0, 0],
                            "period": TWO_PI, "tolerance": 1e-9,
                            "provenance": "Reeb field is -d/ds on z = pi"}]
        doc["maps"] = [{"name": "trivial-cylinder", "source": "cylinder", "target": "symplectisation",
                        "components": ["a", "pi", "0", "-tau"]}]
    else:
        doc["certificates"] = _band_certificates("reeb:alpha", [-5, 5])
    return doc


_LEAF_DEFS = {
    "S": "smoothstep5(rho, 0, 1)",
    "fr": "rho^2*(1 - S) + rho*S",
    "R": "rho/(sqrt(2)*(1 + rho))",
}


def _s3_reeb_leaf(p: Dict[str, float]) -> Dict:
    return _doc(
        "s3-reeb-leaf", "Leaves of the Reeb foliation of S^3 with the round metric; leaf metric "
                        "d rho~^2 + h~(rho~) dtheta^2 after radial reparametrisation",
        "no closed geodesics on the noncompact Reeb leaves", p, {"c": [-10.0, 10.0]},
        leaf={"name": "c", "range": [-10, 10], "value": p["c"], "compact": False},
        special=[{"kind": "radial-reparametrisation", "name": "htilde"}],
        definitions=dict(_LEAF_DEFS),
        charts=[
            {"name": "sphere", "coords": ["s", "r", "theta"], "bounds": [[0, TWO_PI], ["1e-3", "1 - 1e-3"], [0, TWO_PI]],
             "periods": [TWO_PI, None, TWO_PI]},
            {"name": "clifford", "coords": ["theta", "s"], "bounds": [[0, TWO_PI], [0, TWO_PI]],
             "periods": [TWO_PI, TWO_PI]},
            {"name": "leaf_raw", "coords": ["rho", "theta"], "bounds": [[0.01, 50], [0, TWO_PI]],
             "periods": [None, TWO_PI]},
            {"name": "leaf", "coords": ["rho", "theta"], "bounds": [["1e-3", 60], [0, TWO_PI]],
             "periods": [None, TWO_PI]},
            {"name": "warped", "coords": ["r", "theta"], "bounds": [["1e-3", 100], [0, TWO_PI]],
             "periods": [None, TWO_PI]},
        ],
        metrics=[
            {"name": "round", "chart": "sphere",
             "components": {"r,r": "1/(1 - r^2)", "theta,theta": "r^2", "s,s": "1 - r^2"}},
            {"name": "leaf_g", "chart": "leaf", "components": {"rho,rho": "1", "theta,theta": "htilde(rho)"}},
            {"name": "warped_g", "chart": "warped", "components": {"r,r": "1", "theta,theta": "tanh(r)^2"}},
        ],
        maps=[
            {"name": "clifford", "source": "clifford", "target": "sphere", "components": ["s", "sqrt(0.5)", "theta"]},
            {"name": "psi_c", "source": "leaf_raw", "target": "sphere", "components": ["fr + c", "R", "theta"]},
        ],
        certificates=[
            {"name": "radial-velocity-nondecreasing", "field": "geodesic:leaf_g", "W": "v_rho", "eps": 0.0,
             "region": {"bounds": [[0.05, 50], [0, TWO_PI], [-1, 1], [-1, 1]], "grid": [25, 4, 9, 9]}},
        ],
        search={"field": "cogeodesic:leaf_g", "box": [[0.5, 10], [0, "5*pi/3"], [0, "5*pi/3"]], "grid": [6, 6, 6],
                "tmax": 200, "expect": "none"},
    )


def _t3_linear(p: Dict[str, float]) -> Dict:
    return _doc(
        "t3-linear", "Plane leaves of a linear foliation of T^3 with the flat metric",
        "unit cotangent bundle of a linear foliation of T^3 has no closed Reeb orbits", p,
        {"a": [-5.0, 5.0], "b": [-5.0, 5.0]},
        definitions={"c11": "sqrt(1 + a^2)", "c12": "a*b/sqrt(1 + a^2)",
                     "c22": "sqrt(1 + b^2 - a^2*b^2/(1 + a^2))"},
        charts=[
            {"name": "plane", "coords": ["u", "v"], "bounds": [[-50, 50], [-50, 50]]},
            {"name": "T3", "coords": ["x", "y", "w"], "bounds": [[0, TWO_PI]] * 3, "periods": [TWO_PI] * 3},
        ],
        metrics=[
            {"name": "leaf_g", "chart": "plane",
             "components": {"u,u": "1 + a^2", "u,v": "a*b", "v,v": "1 + b^2"}},
            {"name": "flat", "chart": "T3", "components": {"x,x": "1", "y,y": "1", "w,w": "1"}},
        ],
        maps=[{"name": "immersion", "source": "plane", "target": "T3", "components": ["u", "v", "a*u + b*v"]}],
        certificates=[
            {"name": "momentum-pairing-increasing", "field": "cogeodesic:leaf_g",
             "W": "cos(psi)*(c11*u + c12*v) + sin(psi)*c22*v", "eps": 0.5,
             "region": {"bounds": [[-40, 40], [-40, 40], [0, TWO_PI]], "grid": [9, 9, 16]}},
        ],
        search={"field": "cogeodesic:leaf_g", "box": [[-5, 5], [-5, 5], [0, "5*pi/3"]], "grid": [6, 6, 6],
                "tmax": 200, "expect": "none"},
    )


def _flat_torus(p: Dict[str, float]) -> Dict:
    return _doc(
        "flat-torus-unit-cotangent", "Unit cotangent bundle of the flat torus; Reeb flow = cogeodesic flow",
        "Reeb flow of the Liouville form is the leafwise cogeodesic flow", p, {"psi0": [0.0, 2 * math.pi]},
        charts=[{"name": "torus", "coords": ["x", "y"], "bounds": [[0, TWO_PI], [0, TWO_PI]],
                 "periods": [TWO_PI, TWO_PI]}],
        metrics=[{"name": "g", "chart": "torus", "components": {"x,x": "1", "y,y": "1"}}],
        fixtures=[{"name": "horizontal-geodesic", "field": "cogeodesic:g", "point": [0, 0, 0], "period": TWO_PI,
                   "tolerance": 1e-9, "provenance": "straight line in direction (1, 0)"}],
        search={"field": "cogeodesic:g", "box": [[0, "3*pi/2"], [0, "3*pi/2"], ["psi0", "psi0"]],
                "grid": [4, 4, 1], "tmax": 20, "frozen": ["psi"], "expect": "orbits"},
    )


BUILTINS: Dict[str, Tuple[Callable[[Dict[str, float]], Dict], Dict[str, float]]] = {
    "tight-r3": (_tight_r3, {"n": 1}),
    "ot-r3": (_ot_r3, {"eps": 0.002, "delta": 0.1, "phi_a": 0.02}),
    "s2xr": (_s2xr, {"eps": 0.01}),
    "sharp-s2t2": (_sharp_s2t2, {"t": 0.5, "eps": 0.01, "eps_phi": 0.25, "flat_bump": 0}),
    "s3-reeb-leaf": (_s3_reeb_leaf, {"c": 0.0}),
    "t3-linear": (_t3_linear, {"a": math.sqrt(2), "b": math.sqrt(3)}),
    "flat-torus-unit-cotangent": (_flat_torus, {"psi0": 0.0}),
}


def builtin_ids() -> List[str]:
    return list(BUILTINS)


def builtin_config(sid: str, overrides: Optional[Mapping[str, float]] = None) -> Dict:
    if sid not in BUILTINS:
        raise ScenarioError(f"unknown scenario {sid!r}; known: {', '.join(BUILTINS)}")
    builder, defaults = BUILTINS[sid]
    params = dict(defaults)
    for name, value in (overrides or {}).items():
        if name not in params:
            raise ScenarioError(f"{sid}: unknown parameter {name!r}")
        params[name] = float(value)
    return builder(params)


def build_scenario(sid: str, overrides: Optional[Mapping[str, float]] = None) -> Scenario:
    """
    Instantiate a built-in scenario.

    Args:
        sid: scenario id (see ``builtin_ids``)
        overrides: parameter values replacing the defaults

    Returns:
        the loaded Scenario
    """
    config = builtin_config(sid, overrides)
    return scenario_from_config(config, f"<builtin:{sid}>", overrides)


def resolve(spec: str, overrides: Optional[Mapping[str, float]] = None) -> Scenario:
    """A built-in id or a path to a scenario file."""
    if spec in BUILTINS:
        return build_scenario(spec, overrides)
    if spec.endswith(".json"):
        return load_config(spec, overrides)
    raise ScenarioError(f"unknown scenario {spec!r}; known: {', '.join(BUILTINS)}")
