"""
Numerically defined coefficients used by the foliated scenarios.

* Leaves of the suspension foliation: h_t(s) is the time-s flow of
  V(t) = eps_phi * sin(pi t)^3 started at t.  V vanishes at the integers, so
  leaves t in {0, 1} are compact and every other leaf spirals between them.
* Radial reparametrisation of the leaf metric h1 drho^2 + h2 dtheta^2 into
  drho~^2 + h~(rho~) dtheta^2 by following the unit radial field.
"""
import logging
import math
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp

from .exprs import ExpressionDomainError, OpaqueFunction, parse

logger = logging.getLogger(__name__)

SUSPENSION_SPAN = 1000.0
REPARAM_SPAN = 80.0


def suspension_velocity(t, eps_phi: float):
    return eps_phi * np.sin(np.pi * t) ** 3


def suspension_map(t, s: float, eps_phi: float) -> float:
    """Φ_s(t): time-s flow of the suspension velocity field."""
    if s == 0:
        return float(t)
    sol = solve_ivp(lambda _, h: suspension_velocity(h, eps_phi), (0.0, s), [t], method="DOP853",
                    rtol=1e-12, atol=1e-14)
    return float(sol.y[0, -1])


class _DenseBranches:
    """Forward and backward dense solutions of a scalar autonomous ODE."""

    def __init__(self, rhs, y0: float, span: float, name: str):
        self.name = name
        self.span = span
        self.forward = solve_ivp(lambda _, y: rhs(y), (0.0, span), [y0], method="DOP853",
                                 dense_output=True, rtol=1e-12, atol=1e-14).sol
        self.backward = solve_ivp(lambda _, y: rhs(y), (0.0, -span), [y0], method="DOP853",
                                  dense_output=True, rtol=1e-12, atol=1e-14).sol

    def __call__(self, s):
        s_arr = np.asarray(s, dtype=float)
        if np.any(np.abs(s_arr) > self.span):
            raise ExpressionDomainError(self.name, f"argument outside [-{self.span:g}, {self.span:g}]")
        if s_arr.ndim == 0:
            branch = self.forward if s_arr >= 0 else self.backward
            return float(branch(float(s_arr))[0])
        out = np.empty_like(s_arr)
        ahead = s_arr >= 0
        if np.any(ahead):
            out[ahead] = self.forward(s_arr[ahead])[0]
        if np.any(~ahead):
            out[~ahead] = self.backward(s_arr[~ahead])[0]
        return out


@lru_cache(maxsize=64)
def suspension_leaf(t: float, eps_phi: float, name: str = "leaf_h") -> OpaqueFunction:
    """
    h_t as an opaque one-argument function of s with derivative V(h_t(s)).
    """
    if float(t).is_integer():
        return OpaqueFunction(name, 1, lambda s: np.zeros_like(np.asarray(s, dtype=float)) + t,
                              lambda s: (np.zeros_like(np.asarray(s, dtype=float)),))
    branches = _DenseBranches(lambda h: suspension_velocity(h, eps_phi), float(t), SUSPENSION_SPAN, name)
    logger.debug("suspension leaf t=%g tabulated on |s| <= %g", t, SUSPENSION_SPAN)
    return OpaqueFunction(name, 1, branches, lambda s: (suspension_velocity(branches(s), eps_phi),))


LEAF_PROFILE = {
    "S": "smoothstep5(rho, 0, 1)",
    "f": "rho^2*(1 - S) + rho*S",
    "R": "rho/(sqrt(2)*(1 + rho))",
    "h1": "diff(R, rho)^2/(1 - R^2) + (1 - R^2)*diff(f, rho)^2",
    "h2": "R^2",
}


def leaf_profile():
    """h1 and h2 of the pulled-back leaf metric as expressions in rho."""
    h1 = parse("h1", ("rho",), definitions=LEAF_PROFILE)
    h2 = parse("h2", ("rho",), definitions=LEAF_PROFILE)
    return h1, h2


@lru_cache(maxsize=4)
def radial_reparametrisation(name: str = "htilde") -> OpaqueFunction:
    """
    h~(rho~) = h2(rho(rho~)) where d rho / d rho~ = 1/sqrt(h1(rho)), rho(0) = 0.
    """
    h1, h2 = leaf_profile()

    def speed(rho):
        return 1.0 / math.sqrt(h1.evaluate([float(rho[0])]))

    sol = solve_ivp(lambda _, rho: [speed(rho)], (0.0, REPARAM_SPAN), [0.0], method="DOP853",
                    dense_output=True, rtol=1e-12, atol=1e-14).sol

    def rho_of(u):
        u_arr = np.asarray(u, dtype=float)
        if np.any(u_arr < 0) or np.any(u_arr > REPARAM_SPAN):
            raise ExpressionDomainError(name, f"argument outside [0, {REPARAM_SPAN:g}]")
        return sol(u_arr)[0]

    def value(u):
        rho = rho_of(u)
        out = h2.evaluate(np.atleast_1d(rho)[None, :])
        return float(out[0]) if np.ndim(u) == 0 else out

    def gradient(u):
        rho = np.atleast_1d(rho_of(u))[None, :]
        slope = h2.gradient(rho)[0] / np.sqrt(h1.evaluate(rho))
        return (float(slope[0]) if np.ndim(u) == 0 else slope,)

    return OpaqueFunction(name, 1, value, gradient)


def reparametrised_radius(u: float) -> float:
    """rho(rho~) for reports."""
    h1, _ = leaf_profile()
    sol = solve_ivp(lambda _, rho: [1.0 / math.sqrt(h1.evaluate([float(rho[0])]))], (0.0, u), [0.0],
                    method="DOP853", rtol=1e-12, atol=1e-14)
    return float(sol.y[0, -1])
