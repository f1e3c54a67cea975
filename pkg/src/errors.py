"""
Exception hierarchy for memflow.

Input problems derive from ValueError so callers that only know the
standard library still catch them; solver-side failures do not.
"""
from typing import Dict, Optional


class MemflowError(Exception):
    """Base class for every error raised by memflow"""


class InvalidArgumentError(MemflowError, ValueError):
    """Dimension mismatch, out-of-range index or unusable flag"""


class InstanceSyntaxError(InvalidArgumentError):
    """Malformed instance text; line_number is 1-based"""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class CapacityError(MemflowError):
    """Exhaustive enumeration would exceed the configured cap"""


class SubmodularityError(MemflowError):
    """A pairwise term has a negative second difference"""

    def __init__(self, i: int, j: int, lam: int, mu: int, value: int):
        super().__init__(
            f"edge ({i},{j}) is not submodular at (λ={lam}, μ={mu}): "
            f"second difference {value}")
        self.i = i
        self.j = j
        self.lam = lam
        self.mu = mu
        self.value = value


class ContractError(MemflowError):
    """A caller broke an operation's precondition"""


class CorruptedStoreError(MemflowError):
    """Stored exit-flows admit no permissible reconstruction"""


class InternalInvariantError(MemflowError):
    """A solver invariant failed; always a bug, never an input condition"""


class SolverDisagreementError(MemflowError):
    """Solvers returned different minimal energies for one instance"""

    def __init__(self, energies: Dict[str, int], instance: Optional[str] = None):
        where = f" on {instance}" if instance else ""
        listing = ", ".join(f"{name}={value}" for name, value in energies.items())
        super().__init__(f"solver energies disagree{where}: {listing}")
        self.energies = dict(energies)
        self.instance = instance
