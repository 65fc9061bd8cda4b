"""Exception hierarchy shared by the solver, the oracle and the CLI."""


class TrailStopError(Exception):
    """Base class for every error raised by this package."""


class ModelError(TrailStopError, ValueError):
    """Invalid model or payoff parameters."""


class PoleError(TrailStopError, ZeroDivisionError):
    """Laplace exponent evaluated at the pole of the jump transform."""


class DegenerateRootsError(ModelError):
    """Roots of psi(lambda) = q are complex or too close to each other."""


class PotentialDivergenceError(ModelError):
    """The q-potential of a running reward term does not exist."""

    def __init__(self, gamma: float, psi_gamma: float, q: float):
        self.gamma = gamma
        self.psi_gamma = psi_gamma
        self.q = q
        super().__init__(
            f"q-potential diverges for exponent gamma={gamma!r}: "
            f"psi(gamma)={psi_gamma:.6g} >= q={q:.6g}"
        )


class DomainError(TrailStopError, ValueError):
    """Argument outside the domain of a function."""


class QuadratureError(TrailStopError, ArithmeticError):
    """Numerical integration failed to reach the requested tolerance."""

    def __init__(self, message: str, achieved: float):
        self.achieved = achieved
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
