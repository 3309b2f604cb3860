"""Exceptions and warnings shared across the package."""


class SubpopError(Exception):
    """Base class for all package errors."""


class QuadratureFailure(SubpopError, ArithmeticError):
    """An integrator could not reach the requested tolerance."""


class TruncationFailure(SubpopError, ArithmeticError):
    """A series hit its term cap before meeting the truncation rule."""


class InversionFailure(SubpopError, ArithmeticError):
    """Numerical Laplace inversion did not converge."""


class DivergentExtension(SubpopError, ValueError):
    """f(-x) is requested where the defining integral diverges."""


class DegenerateRates(SubpopError, ValueError):
    """Two birth rates coincide (or nearly so) where distinct rates are required."""


class UnsupportedOrder(SubpopError, ValueError):
    """Derivative order not supported by the chosen differentiation method."""


class UnsupportedFamily(SubpopError, ValueError):
    """Operation not available for this Bernstein-function family."""


class PreconditionViolation(SubpopError, ValueError):
    """Caller-certified precondition found false by numerical probing."""


class GridTooCoarse(SubpopError, RuntimeError):
    """Grid bias bound exceeds the allowed fraction of the estimate."""


class ConfigError(SubpopError, ValueError):
    """Malformed or inconsistent run configuration."""


class CancellationWarning(RuntimeWarning):
    """Estimated relative error of an alternating sum is large."""


class InfiniteMoment:
    """Sentinel returned by moment queries whose value is +infinity.

    Kept as a value rather than an exception because infinite moments are a
    legitimate answer (every moment of a stable-subordinated Yule process is
    infinite).
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITE"

    def __float__(self):
        return float("inf")

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("INFINITE")


INFINITE = InfiniteMoment()
