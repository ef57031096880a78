"""Leaf computations: local collocation operator, DtN map and body-load operators.

A leaf carries a p x p Chebyshev tensor grid flattened as ``k = ix * p + iy``
(x index slow). Its Gauss boundary data is ``4q`` values ordered S, E, N, W
as in :mod:`hps.tree`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Optional

import numpy as np
from scipy.linalg.lapack import dgecon, dgetrf, dgetrs

from .errors import ConfigError, SingularInteriorBlock
from .spectral import cheb_nodes, diff_matrix, gauss_nodes, interp_matrix

if TYPE_CHECKING:
    from .problem import Problem
    from .tree import BoxNode

RCOND_MIN = 1e-13


def checked_lu(mat: np.ndarray, error, node=None, what="matrix"):
    """LU factorization that raises ``error`` when the 1-norm rcond is below RCOND_MIN."""
    # raw LAPACK: the scipy wrappers cost more than a small leaf factorization
    lu, piv, info = dgetrf(mat)
    if info < 0:
        raise ValueError(f"dgetrf: illegal argument {-info}")
    anorm = np.abs(mat).sum(axis=0).max()
    rcond, _ = dgecon(lu, anorm, norm="1")
    if info > 0 or not np.isfinite(rcond) or rcond < RCOND_MIN:
        raise error(f"{what} is numerically singular, rcond={rcond:.3e}", node=node)
    return lu, piv


def lu_apply(factor, rhs):
    """Solve with a factor from :func:`checked_lu`."""
    lu, piv = factor
    x, info = dgetrs(lu, piv, rhs)
    if info != 0:
        raise ValueError(f"dgetrs: illegal argument {-info}")
    return x


@dataclass
class LocalOperator:
    a_full: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    points: np.ndarray  # (p*p, 2)
    xs: np.ndarray
    ys: np.ndarray
    j_ext: np.ndarray
    j_int: np.ndarray
    p: int
    factor_ii: Optional[tuple] = None

    def solve_interior(self, rhs):
        return lu_apply(self.factor_ii, rhs)


@dataclass
class LeafOperators:
    t: Optional[np.ndarray]
    s_c_ge: np.ndarray
    d_ge_c: np.ndarray
    p: int
    q: int
    f_c_ci: Optional[np.ndarray] = None
    h_ge_ci: Optional[np.ndarray] = None
    local: Optional[LocalOperator] = None

    @property
    def has_body(self):
        return self.f_c_ci is not None


def side_indices(p: int) -> list:
    """Grid indices of the p Chebyshev nodes on each side, S, E, N, W, ascending."""
    r = np.arange(p)
    return [r * p, (p - 1) * p + r, r * p + (p - 1), r]


@dataclass(frozen=True)
class LeafTemplate:
    """Coefficient-independent matrices shared by all leaves of one shape.

    Coordinates are relative to the leaf's south-west corner.
    """

    p: int
    q: int
    xs: np.ndarray
    ys: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d11: np.ndarray
    d22: np.ndarray
    d12: np.ndarray
    j_ext: np.ndarray
    j_int: np.ndarray
    ii: tuple  # index pairs of the interior-interior and interior-exterior blocks
    ie: tuple
    gauss_to_cheb: np.ndarray  # p*p x 4q, step 1 (corners averaged), zero interior rows
    d_ge_c: np.ndarray  # 4q x p*p, steps 3 and 4
    d_ge_ci: np.ndarray  # interior columns of d_ge_c
    t_ext: np.ndarray  # d_ge_c restricted to boundary rows of step 1; the same for every leaf


@lru_cache(maxsize=32)
def _template(p: int, q: int, width: float, height: float) -> LeafTemplate:
    xs = cheb_nodes(p, (0.0, width))
    ys = cheb_nodes(p, (0.0, height))
    gx = gauss_nodes(q, (0.0, width))
    gy = gauss_nodes(q, (0.0, height))
    eye = np.eye(p)
    d1 = np.kron(diff_matrix(xs), eye)
    d2 = np.kron(eye, diff_matrix(ys))
    on_edge = np.zeros((p, p), dtype=bool)
    on_edge[[0, -1], :] = True
    on_edge[:, [0, -1]] = True
    on_edge = on_edge.ravel()
    sides = side_indices(p)

    px, py = interp_matrix(gx, xs), interp_matrix(gy, ys)
    l1 = np.zeros((p * p, 4 * q))
    count = np.zeros(p * p)
    for s, (idx, pm) in enumerate(zip(sides, (px, py, px, py))):
        l1[idx, s * q:(s + 1) * q] += pm
        count[idx] += 1
    l1[on_edge] /= count[on_edge, None]

    # global-frame fluxes: d/dx2 on S and N, d/dx1 on E and W
    l3 = np.vstack([d2[sides[0]], d1[sides[1]], d2[sides[2]], d1[sides[3]]])
    qx, qy = interp_matrix(xs, gx), interp_matrix(ys, gy)
    # L4 is block diagonal; apply blockwise
    d_ge_c = np.vstack([qm @ l3[s * p:(s + 1) * p] for s, qm in enumerate((qx, qy, qx, qy))])

    j_ext, j_int = np.flatnonzero(on_edge), np.flatnonzero(~on_edge)
    arrays = dict(xs=xs.points, ys=ys.points, d1=d1, d2=d2, d11=d1 @ d1, d22=d2 @ d2, d12=d1 @ d2,
                  j_ext=j_ext, j_int=j_int, gauss_to_cheb=l1, d_ge_c=d_ge_c,
                  d_ge_ci=np.ascontiguousarray(d_ge_c[:, j_int]), t_ext=d_ge_c[:, j_ext] @ l1[j_ext])
    for a in arrays.values():
        a.setflags(write=False)
    return LeafTemplate(p=p, q=q, ii=np.ix_(j_int, j_int), ie=np.ix_(j_int, j_ext), **arrays)


def leaf_template(p: int, q: int, width: float, height: float) -> LeafTemplate:
    # sibling leaves differ in width by a few ulps; keep them on one cache entry
    return _template(int(p), int(q), float(f"{width:.14g}"), float(f"{height:.14g}"))


@lru_cache(maxsize=64)
def _cheb_reference(p: int) -> np.ndarray:
    ref = cheb_nodes(p).points
    ref.setflags(write=False)
    return ref


def _map_axis(ref, a, b):
    # same mapping and endpoint pinning as cheb_nodes, without revalidating per leaf
    pts = 0.5 * (a + b) + 0.5 * (b - a) * ref
    pts[0], pts[-1] = a, b
    return pts


def leaf_cheb_axes(leaf: "BoxNode", p: int):
    """1D Chebyshev coordinates of the leaf grid along x and y."""
    r = leaf.rect
    ref = _cheb_reference(int(p))
    return _map_axis(ref, r.x0, r.x1), _map_axis(ref, r.y0, r.y1)


# (coefficient name, template matrix, sign and factor in A)
_TERMS = (("c11", "d11", -1.0), ("c12", "d12", -2.0), ("c22", "d22", -1.0), ("c1", "d1", 1.0), ("c2", "d2", 1.0))


def _assemble(problem: "Problem", tpl: LeafTemplate, x, y) -> np.ndarray:
    """Collocation matrices for grid points ``x``, ``y`` of shape ``(..., n)``."""
    n = x.shape[-1]
    a = np.zeros(x.shape + (n,))
    for name, mat, scale in _TERMS:
        fld = getattr(problem, name)
        value = getattr(fld, "constant_value", None)
        if value == 0.0:
            continue
        if value is not None:
            a += (scale * value) * getattr(tpl, mat)
        else:
            co = np.asarray(fld(x, y), dtype=float) * np.ones(x.shape)
            a += (scale * co)[..., None] * getattr(tpl, mat)
    c = problem.c
    value = getattr(c, "constant_value", None)
    if value != 0.0:
        diag = np.arange(n)
        a[..., diag, diag] += value if value is not None else np.asarray(c(x, y), dtype=float)
    return a


def assemble_local_operator(problem: "Problem", leaf: "BoxNode", p: int, factor: bool = True,
                            q: Optional[int] = None) -> LocalOperator:
    """Collocation matrix of the operator on the leaf's p x p Chebyshev grid."""
    if p < 4:
        raise ConfigError(f"p: leaf grids need p >= 4, got {p}")
    r = leaf.rect
    tpl = leaf_template(p, q or p - 1, r.width, r.height)
    xs, ys = leaf_cheb_axes(leaf, p)
    x, y = np.repeat(xs, p), np.tile(ys, p)
    a = _assemble(problem, tpl, x, y)
    local = LocalOperator(
        a_full=a, d1=tpl.d1, d2=tpl.d2, points=np.column_stack([x, y]),
        xs=xs, ys=ys, j_ext=tpl.j_ext, j_int=tpl.j_int, p=p,
    )
    if factor:
        a_ii = a[tpl.ii]
        local.factor_ii = checked_lu(a_ii, SingularInteriorBlock, node=leaf.index,
                                     what="leaf interior block")
    return local


def build_leaf_dtn(local: LocalOperator, leaf: "BoxNode", q: int, keep_local: bool = True) -> LeafOperators:
    """DtN map ``t = L4 L3 L2 L1`` plus the solution and flux operators it is built from."""
    if local.factor_ii is None:
        raise ConfigError("local operator was assembled without an interior factorization")
    p = local.p
    tpl = leaf_template(p, q, leaf.rect.width, leaf.rect.height)
    je, ji = local.j_ext, local.j_int
    # L2 L1 without forming L2: boundary rows copy, interior rows solve
    s_c_ge = tpl.gauss_to_cheb.copy()
    a_ie = local.a_full[tpl.ie]
    s_int = -local.solve_interior(a_ie @ s_c_ge[je])
    s_c_ge[ji] = s_int
    # d_ge_c @ s_c_ge, with the leaf-independent boundary part precomputed
    t = tpl.t_ext + tpl.d_ge_ci @ s_int
    return LeafOperators(t=t, s_c_ge=s_c_ge, d_ge_c=tpl.d_ge_c, p=p, q=q,
                         local=local if keep_local else None)


def build_leaf_body_ops(local: LocalOperator, leaf_ops: LeafOperators):
    """Particular-solution operator ``F`` (zero on the boundary) and its flux map ``H = D F``."""
    if local.factor_ii is None:
        raise ConfigError("local operator was assembled without an interior factorization")
    p = local.p
    m = len(local.j_int)
    f_c_ci = np.zeros((p * p, m))
    f_c_ci[local.j_int] = local.solve_interior(np.eye(m))
    h_ge_ci = leaf_ops.d_ge_c[:, local.j_int] @ f_c_ci[local.j_int]
    leaf_ops.f_c_ci = f_c_ci
    leaf_ops.h_ge_ci = h_ge_ci
    return f_c_ci, h_ge_ci


def build_leaf(problem: "Problem", leaf: "BoxNode", p: int, q: int,
               with_body: bool = False, keep_local: bool = True) -> LeafOperators:
    local = assemble_local_operator(problem, leaf, p, q=q)
    ops = build_leaf_dtn(local, leaf, q, keep_local=keep_local)
    if with_body:
        build_leaf_body_ops(local, ops)
    return ops


def leaf_gauss_points(leaf: "BoxNode", q: int) -> np.ndarray:
    """Coordinates of the leaf's 4q exterior Gauss nodes in S, E, N, W order."""
    r = leaf.rect
    gx = gauss_nodes(q, (r.x0, r.x1)).points
    gy = gauss_nodes(q, (r.y0, r.y1)).points
    return np.vstack([
        np.column_stack([gx, np.full(q, r.y0)]),
        np.column_stack([np.full(q, r.x1), gy]),
        np.column_stack([gx, np.full(q, r.y1)]),
        np.column_stack([np.full(q, r.x0), gy]),
    ])
