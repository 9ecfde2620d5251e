"""Exception types shared across the package."""


class ValidationError(ValueError):
    """A value, configuration or specification failed validation."""


class FitError(RuntimeError):
    """A Gaussian-process fit or factorization could not be completed."""


class ConfigError(ValidationError):
    """An experiment configuration file is malformed.

    ``problems`` holds one human readable line per offending field.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
