"""
Exception hierarchy for the ordered stability toolkit

Every error raised on purpose by the library derives from StabilityError and
from the closest builtin, so callers can catch either one.
"""

from typing import Any, Dict, Optional


class StabilityError(Exception):
    """Base class for all library errors"""


class CycleError(StabilityError, ValueError):
    """Cover relation contains a directed cycle between distinct elements"""


class CapExceeded(StabilityError, RuntimeError):
    """Exhaustive enumeration would exceed the requested cap"""


class SizeError(StabilityError, ValueError):
    """A product or dense materialization is larger than the configured limit"""


class DimMismatch(StabilityError, ValueError):
    """Operands live on different posets or have incompatible shapes"""


class MassMismatch(StabilityError, ValueError):
    """Operands were required to carry equal total mass"""


class BadNetwork(StabilityError, ValueError):
    """Flow network is malformed"""


class NotDominated(StabilityError, ValueError):
    """Stochastic dominance was required but does not hold"""


class NotMonotone(StabilityError, ValueError):
    """A monotone Markov kernel was required"""


class NoCertificate(StabilityError, RuntimeError):
    """No power m up to the cap gave a positive ordered Dobrushin coefficient"""


class DepthExceeded(StabilityError, ValueError):
    """Dyadic depth is beyond the supported cap"""


class BadParams(StabilityError, ValueError):
    """Model parameters are outside their admissible range"""


class ConfigError(StabilityError, ValueError):
    """Experiment configuration is missing fields or is malformed"""


class AssertionFailure(StabilityError, AssertionError):
    """
    A checked inequality failed on a concrete instance

    The instance is kept in ``counterexample`` so the CLI can print it.
    """

    def __init__(self, message: str, counterexample: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.counterexample = counterexample or {}


# Process exit codes used by run_experiments.main
EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_INPUT = 5
EXIT_NO_CERTIFICATE = 6
EXIT_INTERNAL = 7

EXIT_CODES = {
    AssertionFailure: EXIT_ASSERTION,
    ConfigError: EXIT_CONFIG,
    NoCertificate: EXIT_NO_CERTIFICATE,
    CycleError: EXIT_INPUT,
    CapExceeded: EXIT_INPUT,
    SizeError: EXIT_INPUT,
    DimMismatch: EXIT_INPUT,
    MassMismatch: EXIT_INPUT,
    BadNetwork: EXIT_INPUT,
    NotDominated: EXIT_INPUT,
    NotMonotone: EXIT_INPUT,
    DepthExceeded: EXIT_INPUT,
    BadParams: EXIT_INPUT,
}


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the documented process exit code"""
    for error_type, code in EXIT_CODES.items():
        if isinstance(error, error_type):
            return code
    if isinstance(error, (OSError, IOError)):
        return EXIT_IO
    if isinstance(error, (IndexError, ValueError)):
        return EXIT_INPUT
    if isinstance(error, AssertionError):
        return EXIT_ASSERTION
    return EXIT_INTERNAL
