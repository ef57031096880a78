"""Leaf tessellation, binary merge tree and the global Gauss node index space.

Conventions used throughout the package:

* Boxes are numbered breadth first from 1 (the root), so a parent always
  has a smaller index than its children.
* Every leaf edge is a *panel* carrying ``q`` Gauss-Legendre nodes. A node
  on an edge shared by two leaves exists once in the global grid.
* A leaf lists its exterior nodes side by side in the order South, East,
  North, West; along each side nodes run in ascending coordinate.
* A parent lists its exterior nodes as ``[J1; J2]``: the part of the first
  child's boundary not shared with the second, then the second child's.
  The first child (``alpha``) is always the west/south one.
* Fluxes are taken in the global frame: d/dx2 on horizontal edges and
  d/dx1 on vertical edges, no outward-normal sign flips.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .spectral import gauss_nodes

SIDES = ("S", "E", "N", "W")


class Orientation(enum.Enum):
    DX1 = "d/dx1"
    DX2 = "d/dx2"


@dataclass(frozen=True)
class Rect:
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ConfigError(f"domain: degenerate rectangle {self}")

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    def contains(self, x, y, tol=0.0):
        return (x >= self.x0 - tol) & (x <= self.x1 + tol) & (y >= self.y0 - tol) & (y <= self.y1 + tol)

    def as_tuple(self):
        return (self.x0, self.x1, self.y0, self.y1)


@dataclass
class BoxNode:
    index: int
    rect: Rect
    level: int
    # leaf-grid span, half open: [ix0, ix1) x [iy0, iy1)
    span: tuple
    parent: Optional[int] = None
    children: Optional[tuple] = None
    split_axis: Optional[int] = None  # 0: children side by side in x, 1: stacked in y
    i_ext: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    i_int: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def is_leaf(self):
        return self.children is None


@dataclass(frozen=True)
class GaussGrid:
    """All Gauss tabulation nodes of the tessellation.

    ``panels[k]`` holds the ``q`` global node indices of panel ``k``;
    ``vertical[j]`` is True for nodes on a vertical edge.
    """

    points: np.ndarray
    vertical: np.ndarray
    panels: np.ndarray
    q: int

    @property
    def n(self):
        return len(self.points)


@dataclass(frozen=True)
class SiblingPartition:
    """Split of two siblings' exterior nodes into J1, J2 (outer) and J3 (shared).

    ``*_local`` arrays are positions inside the children's ``i_ext`` vectors;
    ``j1``, ``j2``, ``j3`` are the matching global node indices. J3 is listed
    in the same order from both sides.
    """

    j1: np.ndarray
    j2: np.ndarray
    j3: np.ndarray
    j1_alpha: np.ndarray
    j3_alpha: np.ndarray
    j2_beta: np.ndarray
    j3_beta: np.ndarray


def _is_pow2(n):
    return int(n) == n and n >= 1 and (int(n) & (int(n) - 1)) == 0


class BoxTree:
    """Binary tree over a uniform ``leaves_x`` by ``leaves_y`` tessellation."""

    def __init__(self, domain: Rect, leaves_x: int, leaves_y: int, q: int):
        self.domain = domain
        self.leaves_x = int(leaves_x)
        self.leaves_y = int(leaves_y)
        self.q = int(q)
        self.boxes: list[BoxNode] = []
        self.leaf_of_cell = np.zeros((self.leaves_x, self.leaves_y), dtype=int)
        self._partitions: dict[int, SiblingPartition] = {}

    def __len__(self):
        return len(self.boxes)

    def __getitem__(self, index: int) -> BoxNode:
        if index < 1 or index > len(self.boxes):
            raise IndexError(f"box index {index} out of range 1..{len(self.boxes)}")
        return self.boxes[index - 1]

    def __iter__(self):
        return iter(self.boxes)

    @property
    def root(self) -> BoxNode:
        return self.boxes[0]

    @property
    def leaves(self) -> list[BoxNode]:
        return [b for b in self.boxes if b.is_leaf]

    @property
    def parents(self) -> list[BoxNode]:
        return [b for b in self.boxes if not b.is_leaf]

    @property
    def depth(self) -> int:
        return max(b.level for b in self.boxes)

    def levels(self) -> list[list[BoxNode]]:
        """Boxes grouped by depth, root level first."""
        out = [[] for _ in range(self.depth + 1)]
        for b in self.boxes:
            out[b.level].append(b)
        return out

    @property
    def L(self) -> int:
        """Quadtree depth, i.e. log2 of the leaf count per side for square layouts."""
        return int(round(np.log2(max(self.leaves_x, self.leaves_y))))

    def cell_rect(self, ix, iy) -> Rect:
        d = self.domain
        hx = d.width / self.leaves_x
        hy = d.height / self.leaves_y
        x0 = d.x0 + ix * hx
        y0 = d.y0 + iy * hy
        x1 = d.x1 if ix + 1 == self.leaves_x else d.x0 + (ix + 1) * hx
        y1 = d.y1 if iy + 1 == self.leaves_y else d.y0 + (iy + 1) * hy
        return Rect(x0, x1, y0, y1)

    def sibling_partition(self, parent: int) -> SiblingPartition:
        box = self[parent]
        if box.is_leaf:
            raise ConfigError(f"leaf-node argument: box {parent} has no children")
        return self._partitions[parent]

    def locate(self, x, y) -> np.ndarray:
        """Leaf box index for each point (points on shared edges go to the lower cell)."""
        d = self.domain
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ix = np.clip(np.floor((x - d.x0) / d.width * self.leaves_x), 0, self.leaves_x - 1).astype(int)
        iy = np.clip(np.floor((y - d.y0) / d.height * self.leaves_y), 0, self.leaves_y - 1).astype(int)
        return self.leaf_of_cell[ix, iy]

    def describe(self) -> dict:
        return {
            "L": self.L,
            "q": self.q,
            "N": int(self.grid.n),
            "leaves_x": self.leaves_x,
            "leaves_y": self.leaves_y,
            "n_boxes": len(self.boxes),
            "domain": list(self.domain.as_tuple()),
        }


def _make_grid(tree: BoxTree):
    nx, ny, q = tree.leaves_x, tree.leaves_y, tree.q
    ref = gauss_nodes(q, (0.0, 1.0)).points
    # horizontal panels first: (ix, jy) for jy in 0..ny; then vertical (ix, jy) for ix in 0..nx
    hpan = np.arange(nx * (ny + 1)).reshape(nx, ny + 1)
    vpan = nx * (ny + 1) + np.arange((nx + 1) * ny).reshape(nx + 1, ny)
    n_panels = hpan.size + vpan.size
    panels = np.arange(n_panels * q).reshape(n_panels, q)
    pts = np.zeros((n_panels * q, 2))
    vertical = np.zeros(n_panels * q, dtype=bool)
    d = tree.domain
    xs = np.linspace(d.x0, d.x1, nx + 1)
    ys = np.linspace(d.y0, d.y1, ny + 1)
    for ix in range(nx):
        for jy in range(ny + 1):
            idx = panels[hpan[ix, jy]]
            pts[idx, 0] = xs[ix] + (xs[ix + 1] - xs[ix]) * ref
            pts[idx, 1] = ys[jy]
    for ix in range(nx + 1):
        for jy in range(ny):
            idx = panels[vpan[ix, jy]]
            pts[idx, 0] = xs[ix]
            pts[idx, 1] = ys[jy] + (ys[jy + 1] - ys[jy]) * ref
            vertical[idx] = True
    grid = GaussGrid(points=pts, vertical=vertical, panels=panels, q=q)
    return grid, hpan, vpan


def _partition(alpha: BoxNode, beta: BoxNode) -> SiblingPartition:
    shared = np.isin(alpha.i_ext, beta.i_ext)
    j3 = alpha.i_ext[shared]
    pos_beta = {g: k for k, g in enumerate(beta.i_ext)}
    j3_beta = np.array([pos_beta[g] for g in j3], dtype=int)
    j1_alpha = np.flatnonzero(~shared)
    j2_beta = np.flatnonzero(~np.isin(beta.i_ext, j3))
    return SiblingPartition(
        j1=alpha.i_ext[j1_alpha],
        j2=beta.i_ext[j2_beta],
        j3=j3,
        j1_alpha=j1_alpha,
        j3_alpha=np.flatnonzero(shared),
        j2_beta=j2_beta,
        j3_beta=j3_beta,
    )


def build_tree(domain, leaves_x: int, leaves_y: int, q: int):
    """Tessellate ``domain`` into uniform leaves and build the merge tree.

    Returns ``(tree, grid)``. The grid is also reachable as ``tree.grid``.
    Boxes with more leaves along x are cut in x; square boxes are cut in y,
    so leaves are first paired side by side and all boxes on one level are
    congruent.
    """
    if not isinstance(domain, Rect):
        domain = Rect(*domain)
    if not (_is_pow2(leaves_x) and _is_pow2(leaves_y)):
        raise ConfigError(f"leaves: counts must be powers of two, got {leaves_x}x{leaves_y}")
    if int(q) != q or q < 2:
        raise ConfigError(f"q: need q >= 2, got {q}")
    tree = BoxTree(domain, leaves_x, leaves_y, q)
    grid, hpan, vpan = _make_grid(tree)
    tree.grid = grid

    def rect_of(span):
        (ix0, ix1), (iy0, iy1) = span
        lo = tree.cell_rect(ix0, iy0)
        hi = tree.cell_rect(ix1 - 1, iy1 - 1)
        return Rect(lo.x0, hi.x1, lo.y0, hi.y1)

    root_span = ((0, tree.leaves_x), (0, tree.leaves_y))
    tree.boxes.append(BoxNode(index=1, rect=rect_of(root_span), level=0, span=root_span))
    queue = deque([tree.boxes[0]])
    while queue:
        box = queue.popleft()
        (ix0, ix1), (iy0, iy1) = box.span
        nx, ny = ix1 - ix0, iy1 - iy0
        if nx == 1 and ny == 1:
            tree.leaf_of_cell[ix0, iy0] = box.index
            continue
        if nx > ny:
            mid = (ix0 + ix1) // 2
            spans = (((ix0, mid), (iy0, iy1)), ((mid, ix1), (iy0, iy1)))
            box.split_axis = 0
        else:
            mid = (iy0 + iy1) // 2
            spans = (((ix0, ix1), (iy0, mid)), ((ix0, ix1), (mid, iy1)))
            box.split_axis = 1
        kids = []
        for span in spans:
            child = BoxNode(
                index=len(tree.boxes) + 1,
                rect=rect_of(span),
                level=box.level + 1,
                span=span,
                parent=box.index,
            )
            tree.boxes.append(child)
            queue.append(child)
            kids.append(child.index)
        box.children = tuple(kids)

    for box in tree.boxes:
        if box.is_leaf:
            (ix, _), (iy, _) = box.span
            sides = {
                "S": grid.panels[hpan[ix, iy]],
                "E": grid.panels[vpan[ix + 1, iy]],
                "N": grid.panels[hpan[ix, iy + 1]],
                "W": grid.panels[vpan[ix, iy]],
            }
            box.i_ext = np.concatenate([sides[s] for s in SIDES])

    for box in reversed(tree.boxes):
        if box.is_leaf:
            continue
        alpha, beta = tree[box.children[0]], tree[box.children[1]]
        part = _partition(alpha, beta)
        tree._partitions[box.index] = part
        box.i_ext = np.concatenate([part.j1, part.j2])
        box.i_int = part.j3
    return tree, grid


def sibling_partition(tree: BoxTree, parent: int) -> SiblingPartition:
    return tree.sibling_partition(parent)


def flux_orientation(grid: GaussGrid, k: int) -> Orientation:
    """Direction of the stored flux at global node ``k`` (0-based)."""
    if not 0 <= k < grid.n:
        raise IndexError(f"out-of-range: node {k} not in 0..{grid.n - 1}")
    return Orientation.DX1 if grid.vertical[k] else Orientation.DX2


def node_count(L: int, q: int) -> int:
    """Gauss node count of a uniform 2**L by 2**L tessellation."""
    return 2 ** (2 * L + 1) * q + 2 ** (L + 1) * q
