"""Exception types shared by all solver modules."""


class DonskerLabError(Exception):
    pass


class InputError(DonskerLabError, ValueError):
    """Rejected input: a precondition on arguments does not hold."""


class ConfigError(InputError):
    """Experiment configuration failed schema validation.

    The message names the offending field.
    """


class CflError(InputError):
    """A stability/accuracy limit was exceeded at some time step."""

    def __init__(self, message, step_index):
        super().__init__(f"{message} (step {step_index})")
        self.step_index = step_index


class SolverBlowupError(DonskerLabError, RuntimeError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, message, step_index):
        super().__init__(f"{message} (step {step_index})")
        self.step_index = step_index


class DegenerateRunError(DonskerLabError, RuntimeError):
    """A particle left the admissible domain of the coefficient model."""

    def __init__(self, message, step_index):
        super().__init__(f"{message} (step {step_index})")
        self.step_index = step_index


class NonConvergenceError(DonskerLabError, RuntimeError):
    """Fixed-point iteration did not reach tolerance within max_iter."""

    def __init__(self, message, residual_history):
        super().__init__(message)
        self.residual_history = list(residual_history)


class MassDeficitWarning(UserWarning):
    """A density slice carries less probability mass than expected."""
