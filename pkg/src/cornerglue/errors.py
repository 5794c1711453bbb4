"""Exception hierarchy shared by every module."""


class CornerGlueError(Exception):
    """Base class; ``stage`` tags where in a pipeline the failure happened."""

    def __init__(self, message, stage=None, **details):
        super().__init__(message)
        self.stage = stage
        self.details = details

    def to_dict(self):
        out = {"error": type(self).__name__, "message": str(self)}
        if self.stage is not None:
            out["stage"] = self.stage
        if self.details:
            out["details"] = {k: _plain(v) for k, v in sorted(self.details.items())}
        return out


def _plain(v):
    try:
        import numpy as np

        if isinstance(v, np.generic):
            return v.item()
        if isinstance(v, np.ndarray):
            return v.tolist()
    except ImportError:  # pragma: no cover
        pass
    return v


class PreconditionError(CornerGlueError):
    pass


class ParameterError(CornerGlueError, ValueError):
    pass


class SmallnessError(CornerGlueError):
    """A construction needs a parameter smaller than the one supplied."""


class ConvergenceError(CornerGlueError):
    pass


class FlowExitError(CornerGlueError):
    pass


class DegenerateFoliationError(CornerGlueError):
    pass


class VerificationError(CornerGlueError):
    """Post-condition check failed; ``details['report']`` holds the margins."""


class FormatError(CornerGlueError, ValueError):
    pass
