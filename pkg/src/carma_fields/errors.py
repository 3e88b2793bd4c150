"""Exception hierarchy shared by all modules."""


class CarmaError(Exception):
    """Base class for domain errors raised by carma_fields."""


class ModelError(CarmaError, ValueError):
    """A model or noise specification is malformed or violates a precondition."""


class RootFindingError(CarmaError, ArithmeticError):
    pass


class QuadratureError(CarmaError, ArithmeticError):
    pass


class RepeatedEigenvalueError(CarmaError):
    """A closed-form route was requested for an axis with repeated eigenvalues."""


class ImaginaryResidueError(CarmaError, ArithmeticError):
    """A quantity that must be real came out with a non-negligible imaginary part."""


class MomentError(CarmaError):
    """A requested moment does not exist for the given noise (e.g. stable variance)."""


class SimulationError(CarmaError):
    pass
