class SpecError(ValueError):
    """Malformed MDP, MMDP, or configuration document."""


class InfeasibleError(RuntimeError):
    """The occupancy polytope (plus any extra constraints) is empty.

    ``report`` carries the solver report, including the phase-1 violation.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DivergenceError(RuntimeError):
    """An IRL learner's gradient blew up."""
