"""Exception and warning types raised by the package."""


class InhomnsError(Exception):
    """Base class for all package errors."""


class BandOutOfRange(InhomnsError, ValueError):
    """Requested Littlewood-Paley band has no resolvable wavenumbers."""


class DegenerateInput(InhomnsError, ValueError):
    """Input is zero (or numerically zero) where a ratio is required."""


class InvalidWeight(InhomnsError, ValueError):
    """Weight function has non-positive mean."""


class InvalidDensity(InhomnsError, ValueError):
    """Density has non-positive minimum."""


class InvalidExponents(InhomnsError, ValueError):
    """Exponents violate the constraint of an inequality check."""


class MeanConstraintViolated(InhomnsError, ValueError):
    """Divergence datum of the Stokes problem is not mean-free."""


class CflViolation(InhomnsError, ValueError):
    """Time step exceeds the advective stability bound."""


class DensityOutOfBounds(InhomnsError, RuntimeError):
    """Transported density left the initial [min, max] range."""


class InconsistentPair(InhomnsError, ValueError):
    """Environment density and velocity violate the mass equation."""


class InsufficientSnapshots(InhomnsError, ValueError):
    """Too few snapshots for a finite-difference time derivative."""


class MomentumNotZero(InhomnsError, ValueError):
    """Initial momentum must vanish for this diagnostic."""


class MissingAtomRuns(InhomnsError, ValueError):
    """Per-atom diagnostics are required but were not supplied."""


class MismatchedTimes(InhomnsError, ValueError):
    """Two time series do not share the same sample times."""


class NoContraction(InhomnsError, RuntimeError):
    """Fixed-point iteration failed to contract."""


class MismatchedRuns(InhomnsError, ValueError):
    """Two runs differ in grid, viscosity or time sampling."""


class MissingDiagnostics(InhomnsError, ValueError):
    """Decay record lacks a quantity needed downstream."""


class ConfigError(InhomnsError, ValueError):
    """Configuration failed validation."""


class TailNotConverged(UserWarning):
    """Time integral has not converged over the simulated horizon."""
