"""Exception types raised by the solver."""


class CRTransportError(Exception):
    """Base class for all package errors."""


class MeshError(CRTransportError, ValueError):
    """Invalid mesh input (degenerate cells, bad sizes, malformed files)."""


class NonConvexRing(CRTransportError):
    """A vertex ring on the half mesh is not convex."""


class PointOnBoundaryOrOutside(CRTransportError, ValueError):
    """Query point is not strictly inside a polygon."""


class PointOutsideCell(CRTransportError, ValueError):
    pass


class InvalidField(CRTransportError, ValueError):
    """A sampled field produced non-finite values."""


class CflViolation(CRTransportError):
    """The time step exceeds the CFL bound of the current stage."""

    def __init__(self, dt, dt_max):
        super().__init__(f"dt={dt:.6e} exceeds CFL bound {dt_max:.6e}")
        self.dt = dt
        self.dt_max = dt_max


class BoundsViolatedByLowOrder(CRTransportError):
    """The low-order predictor lies outside the limiter bounds."""


class UnsupportedCombination(CRTransportError, ValueError):
    pass


class StepUnderflow(CRTransportError):
    """The step controller shrank the time step below the allowed minimum."""
