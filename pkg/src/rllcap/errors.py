"""Exception types shared across the package."""


class DimensionError(ValueError):
    """A column state or array has the wrong length for the model."""


class ParameterError(ValueError):
    """An argument is outside its admissible range."""


class SizeLimitError(ValueError):
    """An exact computation was requested beyond its supported size."""


class SupportError(RuntimeError):
    """The model (or a conditional of it) has no configuration of positive weight."""


class ConfigError(ValueError):
    """A model spec or bench config could not be parsed or is inconsistent."""
