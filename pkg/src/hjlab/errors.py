"""Exception types shared across the package."""


class HJLabError(Exception):
    """Base class for package-specific failures."""


class BoundViolationError(HJLabError):
    """An evaluation exceeded a function's certified sup-norm bound."""


class ModelError(HJLabError):
    """A model specification is numerically invalid (e.g. covariance not PSD)."""


class PolicyError(HJLabError):
    """A feedback policy produced an action outside the admissible set."""


class ConfigurationError(HJLabError):
    """A run configuration is inconsistent or exhausts its search window."""


class CertificationError(HJLabError):
    """A touching certificate could not be established at the given tolerance."""
