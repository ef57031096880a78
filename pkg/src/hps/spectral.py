"""One-dimensional spectral primitives.

Chebyshev-Lobatto and Gauss-Legendre node sets on an interval, spectral
differentiation matrices and barycentric interpolation matrices between
arbitrary node sets. Everything here is a pure function returning fresh
numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigError

CHEBYSHEV = "chebyshev"
GAUSS_LEGENDRE = "gauss_legendre"
ARBITRARY = "arbitrary"


@dataclass(frozen=True)
class NodeSet1D:
    """Ordered nodes on ``interval``; ``kind`` records how they were made."""

    points: np.ndarray
    kind: str = ARBITRARY
    interval: tuple = (-1.0, 1.0)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        a, b = _check_interval(self.interval)
        if pts.ndim != 1 or np.any(np.diff(pts) <= 0):
            raise ConfigError("duplicate-nodes: node set must be strictly increasing")
        if pts.size and (pts[0] < a or pts[-1] > b):
            raise ConfigError(f"node set leaves its interval [{a}, {b}]")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "interval", (a, b))

    def __len__(self):
        return len(self.points)


NodesLike = Union[NodeSet1D, np.ndarray, list, tuple]


def _points(nodes: NodesLike) -> np.ndarray:
    if isinstance(nodes, NodeSet1D):
        return nodes.points
    return np.atleast_1d(np.asarray(nodes, dtype=float))


def _check_interval(interval):
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ConfigError(f"degenerate-interval: need a < b, got [{a}, {b}]")
    return a, b


def _affine(ref: np.ndarray, a: float, b: float) -> np.ndarray:
    # map from [-1, 1]; written around the midpoint so symmetric reference
    # nodes stay symmetric after mapping
    return 0.5 * (a + b) + 0.5 * (b - a) * ref


def cheb_nodes(p: int, interval=(-1.0, 1.0)) -> NodeSet1D:
    """``p`` Chebyshev extreme points on ``interval``, ascending, endpoints included."""
    if int(p) != p or p < 2:
        raise ConfigError(f"invalid-count: Chebyshev grid needs p >= 2, got {p}")
    a, b = _check_interval(interval)
    p = int(p)
    # sin form is exactly antisymmetric about 0, unlike -cos(pi k/(p-1))
    k = np.arange(p)
    ref = np.sin(np.pi * (2 * k - (p - 1)) / (2 * (p - 1)))
    pts = _affine(ref, a, b)
    pts[0], pts[-1] = a, b
    return NodeSet1D(pts, CHEBYSHEV, (a, b))


def _legendre_and_derivative(n: int, x: np.ndarray):
    p0 = np.ones_like(x)
    p1 = x.copy()
    if n == 0:
        return p0, np.zeros_like(x)
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    return p1, dp


def legendre_roots(q: int, tol: float = 1e-15, maxiter: int = 100) -> np.ndarray:
    """Roots of the degree-``q`` Legendre polynomial on [-1, 1], ascending.

    Newton iteration from the asymptotic Tricomi-type initial guess. Only the
    nonnegative half is iterated and then mirrored, so the result is exactly
    symmetric.
    """
    m = (q + 1) // 2
    i = np.arange(1, m + 1)
    x = np.cos(np.pi * (i - 0.25) / (q + 0.5))
    for _ in range(maxiter):
        pq, dpq = _legendre_and_derivative(q, x)
        dx = pq / dpq
        x = x - dx
        if np.max(np.abs(dx)) <= tol:
            break
    # x is descending in [0, 1); x[-1] == 0 when q is odd
    if q % 2:
        return np.concatenate([-x[:-1], [0.0], x[-2::-1]])
    return np.concatenate([-x, x[::-1]])


def gauss_nodes(q: int, interval=(-1.0, 1.0)) -> NodeSet1D:
    """``q`` Gauss-Legendre points on ``interval`` (endpoints excluded)."""
    if int(q) != q or q < 1:
        raise ConfigError(f"invalid-count: Gauss grid needs q >= 1, got {q}")
    a, b = _check_interval(interval)
    return NodeSet1D(_affine(legendre_roots(int(q)), a, b), GAUSS_LEGENDRE, (a, b))


def barycentric_weights(nodes: NodesLike) -> np.ndarray:
    """Weights ``1 / prod_{j != i}(x_i - x_j)``, normalised to max modulus 1.

    Differences are rescaled by the capacity of the node span (length / 4)
    so the products neither overflow nor underflow for short intervals.
    """
    x = _points(nodes)
    n = len(x)
    if n == 1:
        return np.ones(1)
    scale = 4.0 / (x.max() - x.min())
    diff = (x[:, None] - x[None, :]) * scale
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0.0):
        raise ConfigError("duplicate-nodes: interpolation nodes must be distinct")
    w = 1.0 / np.prod(diff, axis=1)
    return w / np.max(np.abs(w))


def diff_matrix(nodes: NodesLike) -> np.ndarray:
    """Spectral differentiation matrix on ``nodes``.

    Row ``i`` evaluates the derivative of the interpolating polynomial at
    node ``i``. The diagonal is the negative off-diagonal row sum.
    """
    x = _points(nodes)
    if len(x) < 2:
        raise ConfigError("duplicate-nodes: need at least two distinct nodes")
    w = barycentric_weights(x)
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    d = (w[None, :] / w[:, None]) / dx
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return d


def interp_matrix(source: NodesLike, target: NodesLike) -> np.ndarray:
    """Matrix mapping values at ``source`` nodes to the interpolant at ``target``.

    Barycentric formula of the second kind. A target that coincides with a
    source node gets the corresponding unit row. Targets slightly outside
    the source hull (extrapolation) are allowed.
    """
    xs = _points(source)
    xt = _points(target)
    w = barycentric_weights(xs)
    diff = xt[:, None] - xs[None, :]
    exact = diff == 0.0
    hit = exact.any(axis=1)
    diff[exact] = 1.0
    terms = w[None, :] / diff
    mat = terms / terms.sum(axis=1, keepdims=True)
    if hit.any():
        mat[hit] = exact[hit].astype(float)
    return mat
