"""Exception types shared across the package."""


class PwaError(Exception):
    """Base class for all package errors."""


class SingularPoints(PwaError):
    """The d points defining a hyperplane are (nearly) linearly dependent."""


class NumericalFailure(PwaError):
    """An LP or linear solve failed to converge."""


class TooManyCuts(PwaError):
    """The cut count exceeds the configured enumeration limit."""


class NoChamber(PwaError):
    """A point's side vector matches no feasible chamber."""


class OutOfDomain(PwaError):
    """A query point lies outside the model's domain box."""


class SchemaError(PwaError):
    """Malformed model JSON; ``path`` points at the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class EvaluationFailure(PwaError):
    """The target function returned non-finite values on the sample set."""

    def __init__(self, point, message="non-finite function value"):
        super().__init__(f"{message} at {list(map(float, point))}")
        self.point = point
