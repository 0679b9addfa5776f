"""Exception types raised by the package."""


class ConfigurationError(ValueError):
    """Invalid parameters for an environment, simulation or run."""


class EmptyWindowError(ConfigurationError):
    """A point-process window came out with no sites."""


class CapacityError(ValueError):
    """Window too large for exact state-space enumeration."""


class ExplosionError(RuntimeError):
    """A backward trace did not terminate within its step cap."""

    def __init__(self, site, steps):
        super().__init__(f"trace from site {site} exceeded {steps} steps (explosion)")
        self.site = site
        self.steps = steps


class ComponentBlowup(RuntimeError):
    """A window graph produced a component above the configured cap."""

    def __init__(self, window, size, cap):
        super().__init__(
            f"component of size {size} in time window {window} exceeds cap {cap}"
        )
        self.window = window
        self.size = size
        self.cap = cap
