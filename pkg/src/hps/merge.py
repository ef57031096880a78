"""Merging the DtN maps of two sibling boxes.

With fluxes taken in the global frame, both children report the same
derivative on the shared interface J3, so flux continuity reads

    T31a u1 + T33a u3 + h3a = T32b u2 + T33b u3 + h3b

and the Schur pivot is the difference ``T33a - T33b``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, SingularInterfaceOperator
from .leaf import checked_lu, lu_apply
from .tree import SiblingPartition


@dataclass
class ParentOperators:
    s_gi_ge: np.ndarray
    t_ge_ge: Optional[np.ndarray]
    n1: int
    # body-load extras, kept only when requested
    x_factor: Optional[tuple] = None
    t13_t23: Optional[np.ndarray] = None

    @property
    def has_body(self):
        return self.x_factor is not None

    def apply_x(self, rhs):
        return lu_apply(self.x_factor, rhs)


def merge_siblings(t_alpha: np.ndarray, t_beta: np.ndarray, part: SiblingPartition,
                   keep_body: bool = False, node=None) -> ParentOperators:
    """Parent solution operator ``S`` and DtN ``T`` on ``[J1; J2]``.

    Raises :class:`SingularInterfaceOperator` when ``T33a - T33b`` cannot be
    factored reliably (typically a resonance of the parent box).
    """
    a1, a3 = part.j1_alpha, part.j3_alpha
    b2, b3 = part.j2_beta, part.j3_beta
    if len(a3) == 0:
        raise ConfigError("merge needs a nonempty shared interface")
    n1, n2 = len(a1), len(b2)
    # one gather per child into [J1|J3] and [J2|J3] order, then plain slices
    ia = np.concatenate([a1, a3])
    ib = np.concatenate([b2, b3])
    ta = t_alpha[ia[:, None], ia]
    tb = t_beta[ib[:, None], ib]
    pivot = ta[n1:, n1:] - tb[n2:, n2:]
    factor = checked_lu(pivot, SingularInterfaceOperator, node=node, what="interface operator T33a - T33b")
    rhs = np.hstack([-ta[n1:, :n1], tb[n2:, :n2]])
    s = lu_apply(factor, rhs)
    coupling = np.vstack([ta[:n1, n1:], tb[:n2, n2:]])
    t = coupling @ s
    t[:n1, :n1] += ta[:n1, :n1]
    t[n1:, n1:] += tb[:n2, :n2]
    ops = ParentOperators(s_gi_ge=s, t_ge_ge=t, n1=n1)
    if keep_body:
        ops.x_factor = factor
        ops.t13_t23 = coupling
    return ops


def upward_body_update(parent: ParentOperators, h3_alpha, h3_beta, h1_alpha, h2_beta):
    """Interface values ``w_gi`` and exterior fluxes ``h_ge`` of the parent's particular solution."""
    if not parent.has_body:
        raise ConfigError("parent operators were built without body-load support")
    h3_alpha = np.asarray(h3_alpha, dtype=float)
    h3_beta = np.asarray(h3_beta, dtype=float)
    n3 = parent.s_gi_ge.shape[0]
    n12 = parent.s_gi_ge.shape[1]
    if h3_alpha.shape != (n3,) or h3_beta.shape != (n3,) or len(h1_alpha) + len(h2_beta) != n12:
        raise ConfigError("shape-mismatch: flux sub-vectors do not match the sibling partition")
    w_gi = parent.apply_x(h3_beta - h3_alpha)
    h_ge = np.concatenate([h1_alpha, h2_beta]) + parent.t13_t23 @ w_gi
    return w_gi, h_ge
