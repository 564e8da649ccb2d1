"""Exception hierarchy shared by all bdwalk modules."""


class BdwalkError(Exception):
    """Base class for all library-specific errors."""


class ValidationError(BdwalkError, ValueError):
    """Inputs violate a model contract (bad probabilities, parameters, indices)."""


class ScenarioError(ValidationError):
    """A scenario config document failed to parse or validate."""


class NumericError(BdwalkError, ArithmeticError):
    """A numeric routine failed to reach its declared tolerance."""


class InvariantViolation(BdwalkError):
    """A mathematical invariant that should hold by construction was violated."""


class NotApplicableError(BdwalkError):
    """The requested operation does not apply to this input (e.g. wrong chain class)."""


class SamplingError(BdwalkError):
    """Random sampling failed (e.g. rejection loop exceeded its attempt budget)."""
