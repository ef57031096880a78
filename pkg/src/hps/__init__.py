"""Direct solver for variable-coefficient elliptic problems on rectangles.

Leaf boxes get spectral-collocation Dirichlet-to-Neumann maps that are merged
pairwise up a binary tree; a downward sweep then recovers the solution.
"""

from .errors import (
    ConfigError,
    HPSError,
    MissingBodyOperators,
    ResourceGuard,
    SingularInteriorBlock,
    SingularInterfaceOperator,
    SolverError,
)
from .problem import ManufacturedCase, Problem, catalogue, residual
from .solver import OperatorCache, Solution, build, evaluate_at, solve
from .tree import BoxTree, Rect, build_tree

__all__ = [
    "BoxTree",
    "ConfigError",
    "HPSError",
    "ManufacturedCase",
    "MissingBodyOperators",
    "OperatorCache",
    "Problem",
    "Rect",
    "ResourceGuard",
    "SingularInteriorBlock",
    "SingularInterfaceOperator",
    "Solution",
    "SolverError",
    "build",
    "build_tree",
    "catalogue",
    "evaluate_at",
    "residual",
    "solve",
]
