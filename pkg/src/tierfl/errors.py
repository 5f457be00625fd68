"""Exception taxonomy shared across the package."""


class TierflError(Exception):
    """Base class for all package-specific failures."""


class DimensionError(TierflError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ContractError(TierflError, ValueError):
    """A call violated an API precondition (bad argument, wrong state)."""


class NumericError(TierflError, ArithmeticError):
    """A computation produced or received non-finite values."""


class ConfigError(TierflError, ValueError):
    """One or more configuration fields are invalid.

    Carries the full list of offending fields so a caller can report
    every problem at once instead of failing on the first.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
