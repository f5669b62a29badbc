"""Exception hierarchy shared by all modules.

Every error carries a short machine-readable ``kind`` so the CLI can map it
to an exit code and a JSON error body.
"""


class LatticeEntireError(Exception):
    kind = "error"
    exit_code = 1

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context

    def to_dict(self):
        return {"kind": self.kind, "message": str(self), "context": {k: _jsonable(v) for k, v in self.context.items()}}


def _jsonable(v):
    try:
        import numpy as np

        if isinstance(v, np.generic):
            return v.item()
        if isinstance(v, np.ndarray):
            return v.tolist()
    except ImportError:  # pragma: no cover
        pass
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


class DimensionError(LatticeEntireError, ValueError):
    kind = "dimension"
    exit_code = 2


class ParameterError(LatticeEntireError, ValueError):
    kind = "parameter"
    exit_code = 2


class ConfigError(ParameterError):
    kind = "config"


class NonlinearityError(ParameterError):
    kind = "nonlinearity"


class DivergenceError(LatticeEntireError, ArithmeticError):
    kind = "divergence"
    exit_code = 3


class ConvergenceError(LatticeEntireError, RuntimeError):
    kind = "convergence"
    exit_code = 3


class SpeedEstimationError(ConvergenceError):
    kind = "speed_estimation"


class InfeasibleSpeedError(ParameterError):
    kind = "infeasible_speed"


class AnchoringError(LatticeEntireError, ValueError):
    kind = "anchoring"
    exit_code = 1


class InsufficientRangeError(LatticeEntireError, ValueError):
    kind = "insufficient_range"
    exit_code = 1


class DomainError(LatticeEntireError, ValueError):
    kind = "domain"
    exit_code = 1


class CertificationError(LatticeEntireError, RuntimeError):
    kind = "certification"
    exit_code = 1


class ArityError(LatticeEntireError, ValueError):
    kind = "arity"
    exit_code = 2
