"""Exception hierarchy shared by all pfiber modules."""


class PFiberError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(PFiberError):
    """Invalid configuration: domains, resolutions, coefficient bounds, config files."""


class InputError(PFiberError):
    """An argument violates a documented precondition."""


class DomainError(PFiberError):
    """A field lies outside the admissible set of the requested operation."""


class ContractViolation(PFiberError):
    """A field breaks a structural contract, e.g. nonzero trace on the boundary."""


class HypothesisViolation(PFiberError):
    """The standing assumptions on the coefficients do not hold."""


class NumericalError(PFiberError):
    """An internal numerical procedure failed to produce a usable value."""
