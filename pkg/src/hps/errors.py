"""Exception hierarchy shared by the solver modules and the CLI."""


class HPSError(Exception):
    """Base class. ``code`` is the machine-readable tag printed by the CLI."""

    code = "hps-error"


class ConfigError(HPSError, ValueError):
    code = "config-invalid"


class SolverError(HPSError):
    code = "solver-error"

    def __init__(self, message, node=None):
        self.node = node
        if node is not None:
            message = f"{message} (box {node})"
        super().__init__(message)


class SingularInteriorBlock(SolverError):
    """Interior collocation block of a leaf is numerically singular."""

    code = "singular-interior-block"


class SingularInterfaceOperator(SolverError):
    """Schur pivot ``T33_alpha - T33_beta`` of a merge is numerically singular.

    Almost always a resonance: the parent box has a nontrivial Dirichlet
    null space at the given wavenumber.
    """

    code = "singular-interface-operator"


class MissingBodyOperators(SolverError):
    code = "cache-missing-body-operators"


class ResourceGuard(HPSError):
    code = "resource-guard"
