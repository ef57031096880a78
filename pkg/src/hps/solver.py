"""Build and solve sweeps over the box tree, and point evaluation.

``build`` walks the tree level by level from the leaves up, computing leaf
DtN maps and merging siblings. ``solve`` runs the optional upward pass for
the body load and then the downward pass that fills in the Gauss nodes on
every interface. ``evaluate_at`` reconstructs the solution inside leaves.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, HPSError, MissingBodyOperators
from .leaf import LeafOperators, build_leaf, leaf_cheb_axes
from .merge import ParentOperators, merge_siblings, upward_body_update
from .problem import Problem, as_field, is_zero
from .spectral import interp_matrix
from .tree import BoxTree

logger = logging.getLogger(__name__)

MEMORY_POLICIES = ("many", "minimal")


class PointOutsideDomain(HPSError, ValueError):
    code = "point-outside-domain"


@dataclass
class OperatorCache:
    tree: BoxTree
    problem: Problem
    p: int
    q: int
    with_body: bool
    memory: str = "many"
    slots: dict = field(default_factory=dict)
    level_seconds: dict = field(default_factory=dict)
    build_seconds: float = 0.0

    def __getitem__(self, index: int) -> Union[LeafOperators, ParentOperators]:
        return self.slots[index]

    @property
    def root_t(self) -> np.ndarray:
        return self.slots[1].t if self.tree.root.is_leaf else self.slots[1].t_ge_ge

    @property
    def memory_bytes(self) -> int:
        total = 0
        for ops in self.slots.values():
            for value in vars(ops).values():
                if isinstance(value, np.ndarray):
                    total += value.nbytes
                elif isinstance(value, tuple):
                    total += sum(v.nbytes for v in value if isinstance(v, np.ndarray))
        return total


@dataclass
class Solution:
    u: np.ndarray
    leaf_values: dict = field(default_factory=dict)
    w_gi: dict = field(default_factory=dict)
    g_ci: dict = field(default_factory=dict)
    f_values: Optional[np.ndarray] = None

    @property
    def has_body(self):
        return bool(self.g_ci)


def estimate_memory(tree: BoxTree, p: int, with_body: bool, memory: str = "many") -> int:
    """Peak bytes of stored operators, counted from the index vectors alone."""
    q = tree.q
    m = (p - 2) ** 2
    leaf_bytes = 0
    for leaf in tree.leaves:
        n = 4 * q
        keep = n * n  # DtN, live until the parent merges
        if memory == "many":
            keep += p * p * n + 4 * q * p * p
        if with_body:
            keep += n * m + (p * p * m if memory == "many" else 0)
        leaf_bytes += keep
    parent_bytes = 0
    for box in tree.parents:
        ne, ni = len(box.i_ext), len(box.i_int)
        parent_bytes += ni * ne + ne * ne
        if with_body:
            parent_bytes += ni * ni + ne * ni
    return 8 * (leaf_bytes + parent_bytes)


def leaf_cheb_points(leaf, p: int):
    xs, ys = leaf_cheb_axes(leaf, p)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return xs, ys, X.ravel(), Y.ravel()


def _interior_mask(p):
    m = np.ones((p, p), dtype=bool)
    m[[0, -1], :] = False
    m[:, [0, -1]] = False
    return m.ravel()


def _map(fn, items, threads):
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def build(problem: Problem, tree: BoxTree, with_body: bool = False, p: Optional[int] = None,
          memory: str = "many", threads: int = 1, strict_ellipticity: bool = True) -> OperatorCache:
    """Compute leaf operators and merge them up to the root."""
    if memory not in MEMORY_POLICIES:
        raise ConfigError(f"memory: expected one of {MEMORY_POLICIES}, got {memory!r}")
    q = tree.q
    p = q + 1 if p is None else int(p)
    if p < 4:
        raise ConfigError(f"p: leaf grids need p >= 4, got {p}")
    cache = OperatorCache(tree=tree, problem=problem, p=p, q=q, with_body=with_body, memory=memory)
    t_start = time.perf_counter()
    # constant principal coefficients need one check, not one per leaf
    principal = [getattr(getattr(problem, n), "constant_value", None) for n in ("c11", "c12", "c22")]
    per_leaf_check = any(v is None for v in principal)
    if not per_leaf_check:
        r = tree.root.rect
        problem.check_ellipticity(np.array([r.x0]), np.array([r.y0]), strict=strict_ellipticity)

    def do_leaf(leaf):
        if per_leaf_check:
            _, _, x, y = leaf_cheb_points(leaf, p)
            problem.check_ellipticity(x, y, strict=strict_ellipticity)
        # solves read s_c_ge and f_c_ci; the collocation matrix and its factor are not needed
        ops = build_leaf(problem, leaf, p, q, with_body=with_body, keep_local=False)
        if memory == "minimal":
            ops.s_c_ge = None
            ops.d_ge_c = None
            ops.f_c_ci = None
        return ops

    def do_parent(box):
        a, b = box.children
        ta, tb = _dtn(cache.slots[a]), _dtn(cache.slots[b])
        part = tree.sibling_partition(box.index)
        return merge_siblings(ta, tb, part, keep_body=with_body, node=box.index)

    for depth, boxes in reversed(list(enumerate(tree.levels()))):
        t0 = time.perf_counter()
        leaves = [b for b in boxes if b.is_leaf]
        parents = [b for b in boxes if not b.is_leaf]
        for box, ops in zip(leaves, _map(do_leaf, leaves, threads)):
            cache.slots[box.index] = ops
        for box, ops in zip(parents, _map(do_parent, parents, threads)):
            cache.slots[box.index] = ops
            for child in box.children:
                _release_dtn(cache, child)
        cache.level_seconds[depth] = time.perf_counter() - t0
    cache.build_seconds = time.perf_counter() - t_start
    return cache


def _dtn(ops):
    return ops.t if isinstance(ops, LeafOperators) else ops.t_ge_ge


def _release_dtn(cache: OperatorCache, index: int):
    ops = cache.slots[index]
    if isinstance(ops, LeafOperators):
        ops.t = None
    else:
        ops.t_ge_ge = None


_FROM_PROBLEM = object()


def _boundary_values(cache, f):
    root = cache.tree.root
    if isinstance(f, np.ndarray) and f.ndim == 1:
        if f.shape != (len(root.i_ext),):
            raise ConfigError(f"shape-mismatch: boundary data needs {len(root.i_ext)} values")
        return f.astype(float)
    pts = cache.tree.grid.points[root.i_ext]
    return np.asarray(as_field(f)(pts[:, 0], pts[:, 1]), dtype=float) * np.ones(len(pts))


def _leaf_ops(cache: OperatorCache, leaf) -> LeafOperators:
    """Stored leaf operators, or freshly rebuilt ones under the minimal policy."""
    ops = cache.slots[leaf.index]
    if ops.s_c_ge is not None:
        return ops
    return build_leaf(cache.problem, leaf, cache.p, cache.q, with_body=cache.with_body, keep_local=False)


def solve(cache: OperatorCache, f=_FROM_PROBLEM, g=_FROM_PROBLEM, threads: int = 1) -> Solution:
    """Solve with Dirichlet data ``f`` and body load ``g``.

    Both default to the fields of the problem the cache was built for.
    ``f`` may also be an array of values at the root's exterior Gauss nodes.
    ``g`` of ``None`` or ``0`` means no body load.
    """
    tree = cache.tree
    prob = cache.problem
    f = prob.f if f is _FROM_PROBLEM else f
    g = prob.g if g is _FROM_PROBLEM else g
    g = None if g is None else as_field(g)
    body = not is_zero(g)
    if body and not cache.with_body:
        raise MissingBodyOperators("body load given but operators were built without body support")
    p = cache.p
    sol = Solution(u=np.zeros(tree.grid.n))
    interior = _interior_mask(p)

    if body:
        h = {}
        for depth, boxes in reversed(list(enumerate(tree.levels()))):
            for box in boxes:
                if box.is_leaf:
                    _, _, x, y = leaf_cheb_points(box, p)
                    g_ci = np.asarray(g(x[interior], y[interior]), dtype=float) * np.ones(interior.sum())
                    sol.g_ci[box.index] = g_ci
                    h[box.index] = cache.slots[box.index].h_ge_ci @ g_ci
                else:
                    a, b = box.children
                    part = tree.sibling_partition(box.index)
                    ha, hb = h.pop(a), h.pop(b)
                    w, h[box.index] = upward_body_update(
                        cache.slots[box.index], ha[part.j3_alpha], hb[part.j3_beta],
                        ha[part.j1_alpha], hb[part.j2_beta])
                    sol.w_gi[box.index] = w

    u = sol.u
    sol.f_values = _boundary_values(cache, f)
    u[tree.root.i_ext] = sol.f_values
    for boxes in tree.levels():
        for box in boxes:
            if box.is_leaf:
                continue
            ops = cache.slots[box.index]
            val = ops.s_gi_ge @ u[box.i_ext]
            if body:
                val += sol.w_gi[box.index]
            u[box.i_int] = val

    if cache.memory == "many":
        def leaf_values(leaf):
            ops = cache.slots[leaf.index]
            uc = ops.s_c_ge @ u[leaf.i_ext]
            if body:
                uc += ops.f_c_ci @ sol.g_ci[leaf.index]
            return uc

        leaves = tree.leaves
        for leaf, uc in zip(leaves, _map(leaf_values, leaves, threads)):
            sol.leaf_values[leaf.index] = uc
    return sol


def leaf_grid_values(cache: OperatorCache, solution: Solution, leaf) -> np.ndarray:
    """Solution on the p x p Chebyshev grid of ``leaf`` (flattened ix-major)."""
    uc = solution.leaf_values.get(leaf.index)
    if uc is not None:
        return uc
    ops = _leaf_ops(cache, leaf)
    uc = ops.s_c_ge @ solution.u[leaf.i_ext]
    if solution.has_body:
        uc = uc + ops.f_c_ci @ solution.g_ci[leaf.index]
    return uc


def evaluate_at(cache: OperatorCache, solution: Solution, points) -> np.ndarray:
    """Interpolate the solution to arbitrary points of the domain."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tree = cache.tree
    dom = tree.domain
    tol = 1e-12 * max(dom.width, dom.height)
    inside = dom.contains(pts[:, 0], pts[:, 1], tol)
    if not np.all(inside):
        k = int(np.flatnonzero(~inside)[0])
        raise PointOutsideDomain(f"point-outside-domain: {tuple(pts[k])} not in {dom.as_tuple()}")
    owner = tree.locate(pts[:, 0], pts[:, 1])
    out = np.empty(len(pts))
    p = cache.p
    for idx in np.unique(owner):
        sel = np.flatnonzero(owner == idx)
        leaf = tree[int(idx)]
        xs, ys, _, _ = leaf_cheb_points(leaf, p)
        U = leaf_grid_values(cache, solution, leaf).reshape(p, p)
        ex = interp_matrix(xs, pts[sel, 0])
        ey = interp_matrix(ys, pts[sel, 1])
        out[sel] = np.einsum("mi,ij,mj->m", ex, U, ey)
    return out
