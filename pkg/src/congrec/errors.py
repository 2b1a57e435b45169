"""Exception hierarchy shared by all congrec modules."""


class CongrecError(Exception):
    """Base class for every error raised deliberately by congrec."""


class ParseError(CongrecError, ValueError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class ValidationError(CongrecError, ValueError):
    pass


class DuplicateRecordError(ValidationError):
    def __init__(self, user, item):
        self.user = user
        self.item = item
        super().__init__(f"duplicate rating record for (user={user!r}, item={item!r})")


class EmptyAfterPreprocessingError(CongrecError):
    pass


class ConfigurationError(CongrecError, ValueError):
    pass


class DivergenceError(CongrecError, FloatingPointError):
    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(
            message
            or f"non-finite factors at iteration {iteration}; "
            "try a smaller learning_rate or clamp_closeness_nonnegative=true"
        )


class SampleTooSmallError(CongrecError, ValueError):
    pass


class DegenerateSampleError(CongrecError, ValueError):
    pass
