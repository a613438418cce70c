"""Exception types shared across the optimization stack."""


class InfeasibleInstanceError(RuntimeError):
    """The instance itself admits no feasible point (QoS + power budget empty).

    Raised when the active-beamforming SDP is infeasible at lambda = 0, which
    happens exactly when the QoS/budget constraint set is empty. Distinct from
    SolverFailureError so callers can tell a bad instance from a bad solve.
    """


class SolverFailureError(RuntimeError):
    """The conic backend failed to produce a usable solution (not infeasibility)."""


class RankOneExtractionError(ValueError):
    """A lifted matrix was too far from rank one to extract coefficients from."""
