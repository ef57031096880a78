"""Elliptic problems and a catalogue of manufactured verification cases.

The operator is

    A u = -c11 u_xx - 2 c12 u_xy - c22 u_yy + c1 u_x + c2 u_y + c u

with Dirichlet data ``f`` on the boundary and body load ``g`` inside. All
fields are vectorised callables ``field(x, y) -> array``; plain numbers are
accepted and promoted to constant fields.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError
from .tree import Rect

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]

UNIT_SQUARE = Rect(0.0, 1.0, 0.0, 1.0)
# sin(2x) sinh(2y) on the unit square is resolved to rounding error by very
# small grids; two periods in x make convergence studies informative
TWO_PI_SQUARE = Rect(0.0, 2 * math.pi, 0.0, 2 * math.pi)


class EllipticityError(ConfigError):
    pass


def constant(value: float) -> Field:
    def f(x, y):
        return np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, float(value))

    f.constant_value = float(value)
    return f


def as_field(value) -> Field:
    if callable(value):
        return value
    return constant(value)


def is_zero(fld) -> bool:
    return fld is None or getattr(fld, "constant_value", None) == 0.0


@dataclass
class Problem:
    """Coefficients, boundary data ``f``, body load ``g`` and an optional exact solution.

    ``exact_grad`` returns ``(u_x, u_y)`` and is used by flux checks only.
    """

    c11: Field = field(default_factory=lambda: constant(1.0))
    c12: Field = field(default_factory=lambda: constant(0.0))
    c22: Field = field(default_factory=lambda: constant(1.0))
    c1: Field = field(default_factory=lambda: constant(0.0))
    c2: Field = field(default_factory=lambda: constant(0.0))
    c: Field = field(default_factory=lambda: constant(0.0))
    f: Field = field(default_factory=lambda: constant(0.0))
    g: Optional[Field] = None
    exact: Optional[Field] = None
    exact_grad: Optional[Callable] = None

    def __post_init__(self):
        for name in ("c11", "c12", "c22", "c1", "c2", "c", "f"):
            setattr(self, name, as_field(getattr(self, name)))
        if self.g is not None:
            self.g = as_field(self.g)

    @property
    def has_body_load(self) -> bool:
        return not is_zero(self.g)

    def coefficients(self, x, y) -> dict:
        return {name: np.asarray(getattr(self, name)(x, y), dtype=float) * np.ones_like(x)
                for name in ("c11", "c12", "c22", "c1", "c2", "c")}

    def body_load(self, x, y) -> np.ndarray:
        if self.g is None:
            return np.zeros_like(np.asarray(x, dtype=float))
        return np.asarray(self.g(x, y), dtype=float) * np.ones_like(x)

    def check_ellipticity(self, x, y, strict: bool = True):
        """Check c11 > 0, c22 > 0 and c11 c22 - c12**2 > 0 at the given points."""
        co = self.coefficients(np.asarray(x, float), np.asarray(y, float))
        bad = (co["c11"] <= 0) | (co["c22"] <= 0) | (co["c11"] * co["c22"] - co["c12"] ** 2 <= 0)
        if np.any(bad):
            k = int(np.flatnonzero(np.ravel(bad))[0])
            msg = (f"operator not elliptic at {int(bad.sum())} sampled points, "
                   f"first at ({np.ravel(x)[k]:.6g}, {np.ravel(y)[k]:.6g})")
            if strict:
                raise EllipticityError(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            return False
        return True


@dataclass
class ManufacturedCase:
    name: str
    problem: Problem
    domain: Rect = UNIT_SQUARE
    params: dict = field(default_factory=dict)


def _laplace_harmonic(params):
    k = float(params.get("k", 2.0))
    if k <= 0:
        raise ConfigError(f"invalid-params: laplace_harmonic needs k > 0, got {k}")

    def u(x, y):
        return np.sin(k * x) * np.sinh(k * y)

    def grad(x, y):
        return k * np.cos(k * x) * np.sinh(k * y), k * np.sin(k * x) * np.cosh(k * y)

    return Problem(f=u, g=None, exact=u, exact_grad=grad), {"k": k}, TWO_PI_SQUARE


def _poisson_trig(params):
    a = float(params.get("a", 1.0))
    b = float(params.get("b", 1.0))
    s = math.pi ** 2 * (a * a + b * b)

    def u(x, y):
        return np.sin(a * math.pi * x) * np.sin(b * math.pi * y)

    def grad(x, y):
        return (a * math.pi * np.cos(a * math.pi * x) * np.sin(b * math.pi * y),
                b * math.pi * np.sin(a * math.pi * x) * np.cos(b * math.pi * y))

    def g(x, y):
        return s * u(x, y)

    return Problem(f=u, g=g, exact=u, exact_grad=grad), {"a": a, "b": b}, UNIT_SQUARE


def _helmholtz_variable(params):
    # -Lap u - kappa^2 b(x) u = g, b = 1 - contrast * gaussian bump,
    # exact solution a plane wave so g = kappa^2 (1 - b) u
    kappa = float(params.get("kappa", 10.0))
    contrast = float(params.get("contrast", 0.5))
    theta = float(params.get("theta", 0.6))
    width = float(params.get("width", 0.25))
    if kappa <= 0:
        raise ConfigError(f"invalid-params: helmholtz_variable needs kappa > 0, got {kappa}")
    if not 0 <= contrast < 1:
        raise ConfigError(f"invalid-params: contrast must lie in [0, 1), got {contrast}")
    if width <= 0:
        raise ConfigError(f"invalid-params: width must be positive, got {width}")
    kx, ky = kappa * math.cos(theta), kappa * math.sin(theta)

    def bump(x, y):
        return np.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / width ** 2)

    def c(x, y):
        return -kappa ** 2 * (1.0 - contrast * bump(x, y))

    def u(x, y):
        return np.sin(kx * x + ky * y)

    def grad(x, y):
        cs = np.cos(kx * x + ky * y)
        return kx * cs, ky * cs

    def g(x, y):
        return kappa ** 2 * contrast * bump(x, y) * u(x, y)

    g_field = constant(0.0) if contrast == 0 else g
    prob = Problem(c=c, f=u, g=g_field, exact=u, exact_grad=grad)
    return prob, {"kappa": kappa, "contrast": contrast, "theta": theta, "width": width}, UNIT_SQUARE


def _convection_dominated(params):
    # -Lap u + lam (b1 u_x + b2 u_y) = g with a smooth divergence-free-ish
    # velocity; exact solution chosen smooth so no boundary layers arise
    lam = float(params.get("lam", 100.0))
    if lam < 0:
        raise ConfigError(f"invalid-params: convection_dominated needs lam >= 0, got {lam}")
    pi = math.pi

    def b1(x, y):
        return lam * (1.0 + 0.5 * np.sin(pi * y))

    def b2(x, y):
        return lam * (0.5 + 0.25 * np.cos(pi * x))

    def u(x, y):
        return np.sin(pi * x) * np.cos(1.5 * pi * y) + x * y

    def grad(x, y):
        ux = pi * np.cos(pi * x) * np.cos(1.5 * pi * y) + y
        uy = -1.5 * pi * np.sin(pi * x) * np.sin(1.5 * pi * y) + x
        return ux, uy

    def g(x, y):
        lap = -(pi ** 2 + 2.25 * pi ** 2) * np.sin(pi * x) * np.cos(1.5 * pi * y)
        ux, uy = grad(x, y)
        return -lap + b1(x, y) * ux + b2(x, y) * uy

    return Problem(c1=b1, c2=b2, f=u, g=g, exact=u, exact_grad=grad), {"lam": lam}, UNIT_SQUARE


CATALOGUE = {
    "laplace_harmonic": _laplace_harmonic,
    "poisson_trig": _poisson_trig,
    "helmholtz_variable": _helmholtz_variable,
    "convection_dominated": _convection_dominated,
}


def catalogue(name: str, params: Optional[dict] = None) -> ManufacturedCase:
    """Manufactured case by name.

    Every case accepts ``x0, x1, y0, y1`` to override its default domain
    (the unit square, except [0, 2 pi]^2 for laplace_harmonic). The other
    parameters are case specific: ``k`` for laplace_harmonic, ``a, b`` for
    poisson_trig, ``kappa, contrast, theta, width`` for helmholtz_variable
    and ``lam`` for convection_dominated.
    """
    if name not in CATALOGUE:
        raise ConfigError(f"unknown-name: no catalogue case {name!r}; choose from {sorted(CATALOGUE)}")
    params = dict(params or {})
    dom = {k: float(params.pop(k)) for k in ("x0", "x1", "y0", "y1") if k in params}
    prob, used, default = CATALOGUE[name](params)
    domain = Rect(dom.get("x0", default.x0), dom.get("x1", default.x1),
                  dom.get("y0", default.y0), dom.get("y1", default.y1))
    unknown = set(params) - set(used)
    if unknown:
        raise ConfigError(f"invalid-params: {name} does not take {sorted(unknown)}")
    used.update({"x0": domain.x0, "x1": domain.x1, "y0": domain.y0, "y1": domain.y1})
    return ManufacturedCase(name=name, problem=prob, domain=domain, params=used)


def residual(problem: Problem, u_values, leaf, p: int) -> np.ndarray:
    """``A u - g`` at the interior Chebyshev nodes of ``leaf``.

    ``u_values`` is the solution tabulated on the leaf's p x p grid, in the
    flattening used by :mod:`hps.leaf`.
    """
    from .leaf import assemble_local_operator

    u = np.asarray(u_values, dtype=float).ravel()
    if u.size != p * p:
        raise ConfigError(f"shape-mismatch: expected {p * p} grid values, got {u.size}")
    local = assemble_local_operator(problem, leaf, p, factor=False)
    xi, yi = local.points[local.j_int].T
    return (local.a_full @ u)[local.j_int] - problem.body_load(xi, yi)
