class ConfigurationError(ValueError):
    """Invalid construction parameter or experiment configuration."""


class DomainError(ValueError):
    """Argument outside the domain where a formula is defined."""


class ResolutionWarning(UserWarning):
    """The grid cannot resolve the requested noise level."""


class AdmissibilityWarning(UserWarning):
    """Noise level above the bound that guarantees a well-defined oracle bandwidth."""
