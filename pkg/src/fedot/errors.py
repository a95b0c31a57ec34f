"""Exception hierarchy shared by all solver modules."""


class FedOTError(Exception):
    """Base class for every error raised by this package."""


class NetworkError(FedOTError):
    pass


class IsolatedNode(NetworkError):
    def __init__(self, kind, node):
        self.kind = kind
        self.node = node
        super().__init__(f"{kind} {node!r} has no incident edge")


class DuplicateEdge(NetworkError):
    pass


class Infeasible(FedOTError):
    """A single box-sum set is empty (lo > hi, or lo > 0 with no weight)."""


class EmptyFeasibleSet(Infeasible):
    """The intersection of all plan constraints is empty."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DidNotConverge(FedOTError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class RowMismatch(FedOTError):
    pass


class NonDifferentiable(FedOTError):
    pass


class MaxIterationsExceeded(FedOTError):
    """Raised by iterative solvers; carries the best iterate and the trace."""

    def __init__(self, message, plan=None, trace=None):
        super().__init__(message)
        self.plan = plan
        self.trace = trace


class TooLarge(FedOTError):
    pass


class CheckFailed(FedOTError):
    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class ConfigError(FedOTError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class ValidationError(ConfigError):
    def __init__(self, message, constraint=None):
        self.constraint = constraint
        super().__init__(message)
