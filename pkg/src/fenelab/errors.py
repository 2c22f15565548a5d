class FenelabError(Exception):
    pass


class DomainError(FenelabError, ValueError):
    """A point or weight argument lies outside the set where a formula is defined."""


class RegimeError(FenelabError, ValueError):
    """An operation was asked for under a weight regime it does not cover."""


class AssemblyError(FenelabError):
    pass


class SolverError(FenelabError):
    pass


class CFLViolation(FenelabError):
    pass


class ConfigError(FenelabError, ValueError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class FitError(FenelabError, ValueError):
    """A least-squares fit or ratio could not be formed from the data."""


class GridMismatch(FenelabError, ValueError):
    pass
