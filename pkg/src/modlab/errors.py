"""Exception types raised across the package."""


class ModlabError(Exception):
    pass


class ParameterError(ModlabError, ValueError):
    """A family or construction parameter lies outside its admissible range."""


class DomainError(ModlabError, ValueError):
    """An argument lies outside the domain of the operation (s < 0, lambda <= 0, ...)."""


class InputError(ModlabError, ValueError):
    pass


class ResolutionError(ModlabError, ValueError):
    """The grid cannot resolve the requested kernel."""


class CoverError(ModlabError, ValueError):
    pass


class NumericalError(ModlabError, RuntimeError):
    pass


class UnsupportedWitness(ModlabError, NotImplementedError):
    """No regularity witness is known for the family."""


class UncertifiedError(ModlabError, RuntimeError):
    """The (M, phi) pair failed the pointwise domination check."""


class ConjugateTruncationWarning(RuntimeWarning):
    """The Legendre supremum was attained at the last grid point."""
