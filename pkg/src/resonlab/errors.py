"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value is malformed, unknown, or out of its admissible range."""


class ValidationError(RuntimeError):
    """A constructed object failed one of its internal consistency checks."""


class UnsupportedModeError(ConfigError):
    """The requested mode (e.g. exact lattice arithmetic) is not available for this setup."""


class BlowUpError(RuntimeError):
    """A trajectory left the configured safety ball."""

    def __init__(self, tau, norm, bound, member=None):
        self.tau = tau
        self.norm = norm
        self.bound = bound
        self.member = member
        where = f" (member {member})" if member is not None else ""
        super().__init__(f"blow-up at tau={tau:.6g}{where}: |a|={norm:.6g} exceeds bound {bound:.6g}")


class EnsembleError(RuntimeError):
    """Too many ensemble members failed for the summary to be trustworthy."""


class StaleArtifactError(RuntimeError):
    """A referenced artifact does not hash-match the configuration that claims it."""
