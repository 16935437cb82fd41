"""
Exception hierarchy shared by the solver, the analysis services and the CLI
"""

from typing import List, Optional, Tuple


class HalfFlowError(RuntimeError):
    """Base class for all simulator errors"""


class StructuralError(HalfFlowError):
    """Array shape or dimension does not match the grid"""


class ParameterError(HalfFlowError, ValueError):
    """Invalid operator or model parameter"""


class UnsupportedTargetError(HalfFlowError):
    """Operation needs the S^2 target (three components)"""

    def __init__(self, target_dim: int, operation: str = ""):
        self.target_dim = target_dim
        self.operation = operation
        super().__init__(
            f"{operation or 'operation'} requires target S^2 (m=2), got m={target_dim}"
        )


class SymmetryError(HalfFlowError):
    """Fourier coefficients are not Hermitian symmetric"""

    def __init__(self, violation: float):
        self.violation = violation
        super().__init__(f"coefficients violate Hermitian symmetry by {violation:.3e}")


class ConstraintCollapseError(HalfFlowError):
    """|u| fell below the collapse threshold at some node"""

    def __init__(self, min_norm: float, location: Tuple[int, ...], t: Optional[float] = None):
        self.min_norm = min_norm
        self.location = location
        self.t = t
        where = f" at t={t:.6g}" if t is not None else ""
        super().__init__(f"constraint collapse{where}: |u|={min_norm:.3e} at node {location}")


class DivergenceError(HalfFlowError):
    """Non-finite values appeared in the state"""

    def __init__(self, t: float):
        self.t = t
        super().__init__(f"non-finite state at t={t:.6g}")


class DataError(HalfFlowError):
    """A diagnostic required by a check was not recorded"""


class FormatError(HalfFlowError):
    """Snapshot file is malformed"""


class ConfigError(HalfFlowError):
    """One or more configuration errors, each with its line number"""

    def __init__(self, errors: List[Tuple[int, str]]):
        self.errors = list(errors)
        lines = [f"line {line}: {message}" if line else message for line, message in self.errors]
        super().__init__("; ".join(lines))
