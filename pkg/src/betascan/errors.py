"""Exception types shared across the package."""


class BetaScanError(Exception):
    """Base class for betascan errors."""


class InputError(BetaScanError, ValueError):
    """Invalid user input: bad dimensions, out-of-range parameters, malformed files.

    Maps to CLI exit code 2.
    """


class StageBudgetError(BetaScanError, RuntimeError):
    """A pipeline stage exceeded its wall-clock budget.

    Maps to CLI exit code 3. Reports produced before the budget ran out are
    still written, with a truncation flag.
    """
