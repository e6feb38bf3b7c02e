# app/errors.py
"""Exception types raised across the OGPF package."""


class CaseError(ValueError):
    """Base class for problems with a case file or an in-memory case."""


class CaseParseError(CaseError):
    pass


class CaseSchemaError(CaseError):
    pass


class CaseReferenceError(CaseError):
    pass


class CaseTopologyError(CaseError):
    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(self.issues) or "invalid topology")


class DomainError(ValueError):
    """Nonpositive physical parameter passed to a coefficient formula."""


class ProgramError(ValueError):
    """Misuse of the conic modelling layer (names, bounds, dimensions)."""


class SolveError(RuntimeError):
    pass


class SubproblemError(SolveError):
    """A subproblem solve returned a non-optimal status."""

    def __init__(self, stage: str, status: str, iteration: int | None = None, detail: str = ""):
        self.stage = stage
        self.status = status
        self.iteration = iteration
        where = f"{stage}" if iteration is None else f"{stage} iteration {iteration}"
        msg = f"{where}: solver status '{status}'"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class OracleError(RuntimeError):
    pass


class PressureInfeasibleError(OracleError):
    pass


class NoFeasiblePointError(OracleError):
    pass
