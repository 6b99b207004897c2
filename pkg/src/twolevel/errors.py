"""Typed exceptions shared across the package.

Every failure mode that callers are expected to handle gets its own class;
anything else is allowed to surface as a plain ValueError/RuntimeError.
"""


class TwoLevelError(Exception):
    """Base class for all package errors."""


# --- numerics ---

class NonConvergence(TwoLevelError):
    """Adaptive quadrature exhausted its subdivision budget."""


class NonFiniteSample(TwoLevelError):
    """Integrand returned NaN or infinity on the path."""


class StepUnderflow(TwoLevelError):
    """Finite-difference step below the machine-precision floor."""


class StiffnessAbort(TwoLevelError):
    """ODE step size collapsed below the floor."""


class NonFiniteState(TwoLevelError):
    """ODE state became NaN or infinite."""


# --- fields ---

class DegenerateParams(TwoLevelError):
    """Model parameters violate a constructor precondition."""


class ZeroField(TwoLevelError):
    """Constant field vector is zero."""


class FitFailure(TwoLevelError):
    """Numerical tail fit residual exceeds tolerance."""


# --- dynamics ---

class CoordinateSingularity(TwoLevelError):
    """B_x^2 + B_y^2 = 0: polar angles of the field are undefined."""


class BranchAmbiguity(TwoLevelError):
    """Square-root branch not anchored."""


class CouplingZero(TwoLevelError):
    """Coupling c vanishes: log-derivative terms of the potential blow up."""


class CutoffTooSmall(TwoLevelError):
    """Propagation cutoff leaves a tail beyond tolerance."""

    def __init__(self, message, tail_bound=None):
        super().__init__(message)
        self.tail_bound = tail_bound


# --- stokes ---

class BranchJumpDetected(TwoLevelError):
    """Square-root branch tracking failed along a path."""


class StallDetected(TwoLevelError):
    """Stokes-line tracer stalled (higher-order root or vanishing step)."""


class NoLinkingLine(TwoLevelError):
    """No Stokes line links Re s = -inf to Re s = +inf."""


class NonCanonicalPath(TwoLevelError):
    """Monotonicity of sigma*Im W violated along the supplied path."""

    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation  # (index, sigma*dImW) of first offender


class NearTurningPoint(TwoLevelError):
    """Path passes within margin of a turning point."""


class NearSingularity(TwoLevelError):
    """Evaluation point too close to a pole or turning point."""


class NoCanonicalPathFound(TwoLevelError):
    """Canonical-path construction blocked."""


# --- adiabatic ---

class ParallelAsymptoticVectors(TwoLevelError):
    """Limit field and its leading correction are parallel: |D| = 0."""


class UnknownFamily(TwoLevelError):
    """No printed prefactor family for this model."""


class TailDivergence(TwoLevelError):
    """Regularized integrand decays slower than 1/s^(1+eps)."""


class RegimeViolation(TwoLevelError):
    """ln P not monotone in the fit window."""


class GeometricTermZero(TwoLevelError):
    """Field is planar: the geometric term of omega vanishes identically."""


# --- cli/config ---

class ConfigParseError(TwoLevelError):
    """Config text does not parse."""


class ConfigValidationError(TwoLevelError):
    """Config parsed but a field is invalid."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
