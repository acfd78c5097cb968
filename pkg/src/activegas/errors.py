"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A model or run parameter violates its constraints."""


class ScaleError(ParameterError):
    """Lattice size too small for the requested drift strength."""

    def __init__(self, n, n_min):
        self.n = n
        self.n_min = n_min
        super().__init__(
            f"lattice size N={n} gives a negative jump rate; need N >= {n_min}"
        )


class CflError(RuntimeError):
    """The explicit time step produced an invalid field (CFL violation)."""


class ConvergenceError(RuntimeError):
    """An iterative numerical method failed to reach its tolerance."""
