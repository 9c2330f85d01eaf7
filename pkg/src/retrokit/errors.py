"""Exception types shared across the toolkit."""


class RetrokitError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(RetrokitError, ValueError):
    """Matrix or signal dimensions are incompatible."""


class StabilityError(RetrokitError, RuntimeError):
    """An operation requires a Hurwitz matrix and did not get one."""


class SynthesisError(RetrokitError, RuntimeError):
    """Controller or gain synthesis failed (stabilizability, detectability,
    indefinite weights, or a non-stabilizing user-supplied gain)."""


class ProjectionError(RetrokitError, RuntimeError):
    """Projection construction failed: image overlap, inadmissible dimension,
    or an ill-conditioned complementarity pairing."""


class NumericsError(RetrokitError, RuntimeError):
    """A numeric kernel produced a result that violates its own residual
    or conditioning contract."""


class DivergenceError(RetrokitError, RuntimeError):
    """Simulation state exceeded the divergence limit.

    Carries the partial trajectory computed so far in ``trajectory``.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory
