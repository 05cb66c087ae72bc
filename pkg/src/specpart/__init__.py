"""Approximate spectral optimal partitions of planar domains by penalised segregation."""

from .config import RunConfig, parse_config
from .eigensolve import EigenResult, lowest_eigenpairs
from .energy import PartitionState, energy_and_gradient, energy_beta, energy_gradient, multipliers
from .errors import (
    CellExtinctionError,
    ConfigError,
    DegenerateSampleError,
    EigensolverError,
    EmptyCellError,
    EmptyDomainError,
    GroupExtinctionError,
    OutputError,
    SolverError,
    SpecpartError,
)
from .grid import DirichletOperator, Grid, assemble_laplacian, build_grid, inner_h1, inner_l2
from .optimizer import ContinuationSchedule, SolveReport, solve
from .partition import PartitionResult, audit_cells, build_result, compare_levels, extract_cells
from .specfun import SpectralCost, diagonalize_frame, psi_eval, psi_grad

__version__ = "0.1.0"
