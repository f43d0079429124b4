class ConfigError(ValueError):
    """An experiment configuration failed validation.

    The message starts with the dotted path of the offending field, e.g.
    ``model.vol[1]: expected 2 entries, got 1``.
    """

    def __init__(self, path: str, message: str) -> None:
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DegenerateWeightError(FloatingPointError):
    """A likelihood-ratio weight or weighted simulation output is not finite."""
