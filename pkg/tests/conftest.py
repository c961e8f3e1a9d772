from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vefrac.benchmarks import rect_grid_mesh, square_grid_mesh, unit_square_mesh


@pytest.fixture(scope="session")
def square2():
    """Unit square split into two triangles, all boundary Dirichlet."""
    return unit_square_mesh()


@pytest.fixture(scope="session")
def rect9():
    """2x1 grid rectangle: 9 edges, handy for exhaustive lattice sweeps."""
    return rect_grid_mesh(2, 1, width=2.0, height=1.0)


@pytest.fixture(scope="session")
def grid3():
    """3x3 unit grid: 33 edges."""
    return square_grid_mesh(3)


@pytest.fixture(scope="session")
def grid4_tb():
    """4x4 unit grid with top and bottom rows Dirichlet."""
    return square_grid_mesh(4, dirichlet="topbottom")
