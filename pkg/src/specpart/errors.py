"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class SpecpartError(Exception):
    exit_code = 1


class ConfigError(SpecpartError):
    exit_code = 2

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None and line is not None:
            where = f"{path}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class EmptyDomainError(ConfigError):
    pass


class SolverError(SpecpartError):
    exit_code = 3


class EigensolverError(SolverError):
    def __init__(self, message, residuals=None, values=None):
        super().__init__(message)
        self.residuals = residuals
        self.values = values


class EmptyCellError(SolverError):
    pass


class FrameCollapseError(SolverError):
    pass


class GroupExtinctionError(SolverError):
    pass


class CellExtinctionError(SolverError):
    pass


class OutputError(SpecpartError):
    exit_code = 4


class DegenerateSampleError(SpecpartError):
    exit_code = 5
