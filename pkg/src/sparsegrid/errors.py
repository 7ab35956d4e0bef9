"""Exception types shared across the package."""


class SparseGridError(Exception):
    """Base class for all package errors."""


class ConfigError(SparseGridError):
    """Invalid configuration value (dims, densities, schedules, grids)."""


class CorruptionError(SparseGridError):
    """A sparse container violates its own invariants (mask/value mismatch)."""


class SpecFileError(SparseGridError):
    """Experiment spec file failed to parse or validate.

    Carries all collected problems so the user sees every issue at once.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


class SimulationError(SparseGridError):
    """The simulator detected a stuck or inconsistent run."""
