import math

import numpy as np
import pytest
import sympy as sp

from hps.errors import ConfigError, SingularInterfaceOperator
from hps.leaf import build_leaf
from hps.merge import merge_siblings, upward_body_update
from hps.problem import Problem
from hps.tree import Rect, build_tree

from oracles import DenseCollocation, harmonic_polys

# side by side (split in x) and stacked (split in y)
LAYOUTS = {
    "x": (Rect(0.0, 2.0, 0.0, 1.0), 2, 1),
    "y": (Rect(0.0, 1.0, -0.5, 1.5), 1, 2),
}


def two_leaf(problem, layout, q, with_body=False, p=None):
    rect, nx, ny = LAYOUTS[layout]
    tree, grid = build_tree(rect, nx, ny, q)
    p = p or q + 1
    a, b = (tree[i] for i in tree.root.children)
    oa = build_leaf(problem, a, p, q, with_body=with_body)
    ob = build_leaf(problem, b, p, q, with_body=with_body)
    part = tree.sibling_partition(1)
    par = merge_siblings(oa.t, ob.t, part, keep_body=with_body, node=1)
    return tree, grid, part, oa, ob, par


def gflux(grid, idx, grad):
    x, y = grid.points[idx].T
    gx, gy = grad(x, y)
    return np.where(grid.vertical[idx], gx, gy)


@pytest.mark.parametrize("layout", ["x", "y"])
def test_linear_continuation(layout):
    tree, grid, part, _, _, par = two_leaf(Problem(), layout, 10)
    ext = tree.root.i_ext
    d = grid.points[ext, 0]
    np.testing.assert_allclose(par.s_gi_ge @ d, grid.points[part.j3, 0], atol=1e-9)
    flux = par.t_ge_ge @ d
    np.testing.assert_allclose(flux, grid.vertical[ext].astype(float), atol=1e-9)


@pytest.mark.parametrize("layout", ["x", "y"])
def test_block_identity(layout):
    _, _, part, oa, ob, par = two_leaf(Problem(c=-3.0), layout, 8, with_body=True)
    a1, b2 = part.j1_alpha, part.j2_beta
    blk = np.zeros_like(par.t_ge_ge)
    n1 = len(a1)
    blk[:n1, :n1] = oa.t[np.ix_(a1, a1)]
    blk[n1:, n1:] = ob.t[np.ix_(b2, b2)]
    np.testing.assert_allclose(par.t_ge_ge, blk + par.t13_t23 @ par.s_gi_ge, atol=1e-12 * np.abs(par.t_ge_ge).max())


@pytest.mark.parametrize("layout", ["x", "y"])
def test_interface_flux_consistency(layout):
    prob = Problem(c11=lambda x, y: 1 + 0.2 * y, c2=lambda x, y: 2 * x, c=-5.0)
    tree, _, part, oa, ob, par = two_leaf(prob, layout, 10)
    rng = np.random.default_rng(2)
    d = rng.standard_normal(len(tree.root.i_ext))
    u3 = par.s_gi_ge @ d
    n1 = len(part.j1)
    ua = np.zeros(oa.t.shape[0])
    ub = np.zeros(ob.t.shape[0])
    ua[part.j1_alpha], ua[part.j3_alpha] = d[:n1], u3
    ub[part.j2_beta], ub[part.j3_beta] = d[n1:], u3
    fa = (oa.t @ ua)[part.j3_alpha]
    fb = (ob.t @ ub)[part.j3_beta]
    assert np.max(np.abs(fa - fb)) <= 1e-9 * np.max(np.abs(d)) * max(1.0, np.abs(oa.t).max())


@pytest.mark.parametrize("layout", ["x", "y"])
def test_merge_exact_on_harmonic_polynomials(layout):
    q = 12
    tree, grid, part, _, _, par = two_leaf(Problem(), layout, q)
    ext = tree.root.i_ext
    for n, u, grad in harmonic_polys(q + 1 - 3):
        d = u(*grid.points[ext].T)
        u3 = u(*grid.points[part.j3].T)
        flux = gflux(grid, ext, grad)
        scale = max(1.0, np.abs(d).max())
        assert np.max(np.abs(par.s_gi_ge @ d - u3)) <= 1e-9 * scale, n
        assert np.max(np.abs(par.t_ge_ge @ d - flux)) <= 1e-9 * max(1.0, np.abs(flux).max()), n


def merged_vs_dense(problem, coef, layout, q, data_fn, n_oracle=36):
    tree, grid, part, _, _, par = two_leaf(problem, layout, q)
    ext = tree.root.i_ext
    dense = DenseCollocation(tree.root.rect.as_tuple(), n_oracle, coef)
    dense.solve(data_fn)
    d = data_fn(*grid.points[ext].T)
    ref_flux = dense.global_flux(grid.points[ext], grid.vertical[ext])
    ref_u3 = dense.value(*grid.points[part.j3].T)
    return par.t_ge_ge @ d, ref_flux, par.s_gi_ge @ d, ref_u3


@pytest.mark.parametrize("layout", ["x", "y"])
def test_merge_matches_dense_union_laplace(layout):
    data = lambda x, y: np.exp(x) * np.cos(y) + np.sin(x) * np.cosh(y)
    got, ref, u3, ref_u3 = merged_vs_dense(Problem(), None, layout, 16, data)
    assert np.max(np.abs(got - ref)) <= 1e-8 * np.abs(ref).max()
    assert np.max(np.abs(u3 - ref_u3)) <= 1e-8 * np.abs(ref_u3).max()


def annihilated_operator():
    """Variable coefficients with ``c`` chosen so a smooth positive ``u`` solves A u = 0.

    Generic Dirichlet data is incompatible with the equation at the corners
    and makes every spectral method converge only algebraically there.
    """
    X, Y = sp.symbols("x y")
    u = sp.exp(0.8 * X - 0.6 * Y) * (2 + sp.sin(1.3 * X + 0.7 * Y))
    c11, c1, c2 = 1 + 0.25 * sp.sin(X + Y), 1.5 * Y, 0.5 * X
    c = (c11 * sp.diff(u, X, 2) + sp.diff(u, Y, 2) - c1 * sp.diff(u, X) - c2 * sp.diff(u, Y)) / u
    f = lambda e: sp.lambdify((X, Y), e, "numpy")
    coef = {"c11": f(c11), "c1": f(c1), "c2": f(c2), "c": f(c)}
    return coef, f(u)


@pytest.mark.parametrize("layout", ["x", "y"])
def test_merge_matches_dense_union_variable(layout):
    coef, u = annihilated_operator()
    got, ref, u3, ref_u3 = merged_vs_dense(Problem(**coef), coef, layout, 16, u, 40)
    assert np.max(np.abs(got - ref)) <= 1e-8 * np.abs(ref).max()
    assert np.max(np.abs(u3 - ref_u3)) <= 1e-8 * np.abs(ref_u3).max()


def leaf_h(ops, g):
    loc = ops.local
    xi, yi = loc.points[loc.j_int].T
    return ops.h_ge_ci @ g(xi, yi)


def body_update(layout, prob, g, q):
    tree, grid, part, oa, ob, par = two_leaf(prob, layout, q, with_body=True)
    ha, hb = leaf_h(oa, g), leaf_h(ob, g)
    return tree, grid, part, par, ha, hb


@pytest.mark.parametrize("layout", ["x", "y"])
def test_body_update_matches_dense_particular_solution(layout):
    # zero-boundary particular solution manufactured smooth, with g = A w
    rect = LAYOUTS[layout][0]
    X, Y = sp.symbols("x y")
    w_s = ((X - rect.x0) * (rect.x1 - X) * (Y - rect.y0) * (rect.y1 - Y)
           * (sp.exp(X) * sp.cos(3 * Y) + X * Y))
    c2_s, c_s = 0.7 + X, -2.0 + 0 * X
    g_s = -sp.diff(w_s, X, 2) - sp.diff(w_s, Y, 2) + c2_s * sp.diff(w_s, Y) + c_s * w_s
    f = lambda e: sp.lambdify((X, Y), e, "numpy")
    c2, c, g = f(c2_s), (lambda x, y: -2.0 + 0 * x), f(g_s)
    prob = Problem(c2=c2, c=c)
    tree, grid, part, par, ha, hb = body_update(layout, prob, g, 16)
    w, h_par = upward_body_update(par, ha[part.j3_alpha], hb[part.j3_beta], ha[part.j1_alpha], hb[part.j2_beta])
    dense = DenseCollocation(tree.root.rect.as_tuple(), 40, {"c2": c2, "c": c})
    dense.solve(lambda x, y: 0 * x, g)
    ref_w = dense.value(*grid.points[part.j3].T)
    ext = tree.root.i_ext
    ref_h = dense.global_flux(grid.points[ext], grid.vertical[ext])
    exact_h = gflux(grid, ext, lambda x, y: (f(sp.diff(w_s, X))(x, y), f(sp.diff(w_s, Y))(x, y)))
    assert np.max(np.abs(ref_w - f(w_s)(*grid.points[part.j3].T))) <= 1e-10 * np.abs(ref_w).max()
    assert np.max(np.abs(ref_h - exact_h)) <= 1e-10 * np.abs(ref_h).max()
    assert np.max(np.abs(w - ref_w)) <= 1e-8 * np.abs(ref_w).max()
    assert np.max(np.abs(h_par - ref_h)) <= 1e-8 * np.abs(ref_h).max()

    # the opposite sign conventions are clearly wrong
    w_flip = par.apply_x(ha[part.j3_alpha] - hb[part.j3_beta])
    assert np.max(np.abs(w_flip - ref_w)) > 1e-2 * np.abs(ref_w).max()
    h_flip = np.concatenate([ha[part.j1_alpha], hb[part.j2_beta]]) - par.t13_t23 @ w
    assert np.max(np.abs(h_flip - ref_h)) > 1e-2 * np.abs(ref_h).max()


def test_body_update_poisson_analytic():
    # sin(pi x) sin(pi y) vanishes on the unit square, so it is the particular solution there
    pi = math.pi
    tree, grid = build_tree(Rect(0, 1, 0, 1), 2, 1, 16)
    a, b = (tree[i] for i in tree.root.children)
    oa = build_leaf(Problem(), a, 17, 16, with_body=True)
    ob = build_leaf(Problem(), b, 17, 16, with_body=True)
    part = tree.sibling_partition(1)
    par = merge_siblings(oa.t, ob.t, part, keep_body=True)
    g = lambda x, y: 2 * pi ** 2 * np.sin(pi * x) * np.sin(pi * y)
    ha, hb = leaf_h(oa, g), leaf_h(ob, g)
    w, _ = upward_body_update(par, ha[part.j3_alpha], hb[part.j3_beta], ha[part.j1_alpha], hb[part.j2_beta])
    x3, y3 = grid.points[part.j3].T
    assert np.max(np.abs(w - np.sin(pi * x3) * np.sin(pi * y3))) <= 1e-8


def test_body_update_zero_load():
    tree, grid, part, par, ha, hb = body_update("x", Problem(), lambda x, y: 0 * x, 8)
    w, h = upward_body_update(par, ha[part.j3_alpha], hb[part.j3_beta], ha[part.j1_alpha], hb[part.j2_beta])
    assert np.all(w == 0) and np.all(h == 0)


def test_body_update_equal_interface_fluxes():
    _, _, part, par, _, _ = body_update("x", Problem(), lambda x, y: 1 + 0 * x, 8)
    rng = np.random.default_rng(0)
    h3 = rng.standard_normal(len(part.j3))
    h1 = rng.standard_normal(len(part.j1))
    h2 = rng.standard_normal(len(part.j2))
    w, h = upward_body_update(par, h3, h3, h1, h2)
    assert np.all(w == 0)
    np.testing.assert_array_equal(h, np.concatenate([h1, h2]))


def test_body_update_errors():
    _, _, part, par, _, _ = body_update("x", Problem(), lambda x, y: 1 + 0 * x, 6)
    n3 = len(part.j3)
    with pytest.raises(ConfigError, match="shape-mismatch"):
        upward_body_update(par, np.zeros(n3 + 1), np.zeros(n3), np.zeros(18), np.zeros(18))
    _, _, _, _, _, bare = two_leaf(Problem(), "x", 6)
    assert bare.x_factor is None and bare.t13_t23 is None
    with pytest.raises(ConfigError):
        upward_body_update(bare, np.zeros(n3), np.zeros(n3), np.zeros(18), np.zeros(18))


def test_resonant_union_box_detected():
    # -Lap - k^2 on [0,2]x[0,1] is singular for k^2 = pi^2 (1/4 + 1) while
    # each unit leaf stays regular (its lowest eigenvalue is 2 pi^2)
    prob = Problem(c=-1.25 * math.pi ** 2)
    with pytest.raises(SingularInterfaceOperator, match="box 7") as exc:
        rect, nx, ny = LAYOUTS["x"]
        tree, _ = build_tree(rect, nx, ny, 16)
        a, b = (tree[i] for i in tree.root.children)
        oa = build_leaf(prob, a, 17, 16)
        ob = build_leaf(prob, b, 17, 16)
        merge_siblings(oa.t, ob.t, tree.sibling_partition(1), node=7)
    assert exc.value.node == 7
    assert exc.value.code == "singular-interface-operator"
