"""Exception hierarchy shared by all nz-loops modules.

Every error carries a module-qualified code such as ``exactla.QuadMismatch``
so the command line can report failures in a stable, machine-readable form.
"""


class NZLoopsError(Exception):
    """Base class for all nz-loops errors."""

    module = "core"

    @property
    def code(self) -> str:
        return f"{self.module}.{type(self).__name__}"

    def to_dict(self) -> dict:
        return {"code": self.code, "message": str(self)}


# nzio
class SchemaError(NZLoopsError):
    """A datum file does not conform to nzdatum-v1."""

    module = "nzio"

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class IntegerOverflow(SchemaError):
    module = "nzio"


class IncidenceViolation(NZLoopsError):
    module = "nzio"


# exactla
class SymplecticViolation(NZLoopsError):
    module = "exactla"


class NoIntegerSolution(NZLoopsError):
    module = "exactla"


class DegenerateMove(NZLoopsError):
    module = "exactla"


class QuadMismatch(NZLoopsError):
    module = "exactla"


# mpnum
class PoleAtOne(NZLoopsError):
    module = "mpnum"


class BranchPoint(NZLoopsError):
    module = "mpnum"


# gluesolve
class GlueSolveError(NZLoopsError):
    module = "gluesolve"


class NoConvergence(GlueSolveError):
    pass


class DegenerateShape(GlueSolveError):
    pass


class SingularJacobian(GlueSolveError):
    pass


class NonLatticeResidual(GlueSolveError):
    pass


class BranchJump(GlueSolveError):
    def __init__(self, message: str, m=None):
        self.m = m
        super().__init__(message)


class NonStandardLift(UserWarning):
    """Shapes solve the gluing equations but not with principal logarithms."""


# series
class SingularHessian(NZLoopsError):
    module = "series"


class HalfIntegerSurvivor(NZLoopsError):
    module = "series"


# invariants
class ZeroTorsion(NZLoopsError):
    module = "invariants"


# cli
class ConfigError(NZLoopsError):
    module = "cli"


class PrecisionTooLow(ConfigError):
    pass
