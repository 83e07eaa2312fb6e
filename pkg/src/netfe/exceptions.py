"""Exception hierarchy for netfe."""


class NetFEError(Exception):
    """Base class for all errors raised by netfe."""


class GraphInputError(NetFEError, ValueError):
    """Malformed edge or row input (loops, bad weights, empty data)."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class DisconnectedGraphError(NetFEError, ValueError):
    """Operation requires a connected graph."""

    def __init__(self, message="graph is disconnected; apply largest_component first"):
        super().__init__(message)


class RankError(NetFEError, ValueError):
    """Rank conditions of the fixed-effect model are violated."""

    def __init__(self, message, deficiency=0):
        super().__init__(message)
        self.deficiency = deficiency


class ConvergenceError(NetFEError, RuntimeError):
    """Iterative solver did not converge within its budget."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual norm {residual:.3e})")
        self.residual = residual
