import time

import numpy as np
import pytest

from specpart.grid import assemble_laplacian, build_grid
from specpart.optimizer import ContinuationSchedule, solve
from specpart.partition import build_result
from specpart.specfun import SpectralCost

BENCH_H = 1 / 32
BENCH_SEEDS = (7, 8, 9, 10)


@pytest.fixture(scope="session")
def two_cell_timed():
    """rectangle(2,1), m=2, k=1, plain_sum, h=1/32, beta 2^0..2^14, four seeds; with wall time."""
    t0 = time.perf_counter()
    grid = build_grid(("rectangle", 2, 1), BENCH_H)
    op = assemble_laplacian(grid)
    sched = ContinuationSchedule(beta_ladder=2.0 ** np.arange(15))
    runs = [solve(grid, [1, 1], SpectralCost("plain_sum"), sched, seed=s, op=op) for s in BENCH_SEEDS]
    return (grid, op, runs), time.perf_counter() - t0


@pytest.fixture(scope="session")
def two_cell_runs(two_cell_timed):
    return two_cell_timed[0]


@pytest.fixture(scope="session")
def two_cell_best(two_cell_runs):
    grid, op, runs = two_cell_runs
    state, report = min(runs, key=lambda r: r[1].final.energy)
    return state, report, build_result(state, report)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
