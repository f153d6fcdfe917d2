"""Exception and warning types shared across the package."""


class ConfigError(ValueError):
    """Invalid experiment configuration (bad key, bad value, missing file)."""


class DivergenceError(RuntimeError):
    """State norm exceeded the divergence guard during integration."""

    def __init__(self, step: int, time: float, norm: float):
        self.step = step
        self.time = time
        self.norm = norm
        super().__init__(
            f"state diverged at step {step} (t = {time:.6g}): norm {norm:.3e} "
            f"exceeds the divergence guard"
        )


class NonNilpotentSystemError(RuntimeError):
    """A finite Gramian series was requested for generators that are not
    nilpotent of the claimed order."""


class UnlearnedSystemError(ValueError):
    """An output matrix C is required but has not been set."""


class OracleConvergenceError(RuntimeError):
    """Iterated-integral quadrature failed to converge under refinement."""


class RankDeficiencyWarning(UserWarning):
    """A Gramian or feature matrix has lower numerical rank than expected."""
