"""Shared pytest fixtures for tests."""
from pathlib import Path

import pytest

from src.domain import DomainSpec, Vertex
from src.elliptic import PeriodLattice
from src.rect_slit import RectSlitInput, solve

REPO_ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = REPO_ROOT / "data" / "configs"
REFERENCE_TABLE = REPO_ROOT / "data" / "reference" / "rect_holes.yaml"


@pytest.fixture(scope="session")
def lattice():
    """Lattice of the (-0.5, 0.5) slit in the b = 0.5 rectangle."""
    return PeriodLattice(omega2=2.1382753178673837j)


@pytest.fixture(scope="session")
def rect_solution():
    """Exact map onto (-1, 1) x (-0.5, 0.5) minus [-0.5, 0.5]."""
    return solve(RectSlitInput(a1=-0.5, a2=0.5, b=0.5))


@pytest.fixture(scope="session")
def short_slit_solution():
    """Exact map for the slit [-0.25, 0.25]."""
    return solve(RectSlitInput(a1=-0.25, a2=0.25, b=0.5))


@pytest.fixture
def square_with_slit():
    """Unit square around a horizontal slit, built by hand."""
    return DomainSpec(
        outer=(
            Vertex("o1", complex(1, 1), 0.5),
            Vertex("o2", complex(-1, 1), 0.5),
            Vertex("o3", complex(-1, -1), 0.5),
            Vertex("o4", complex(1, -1), 0.5),
        ),
        inner=(Vertex("a2", complex(0.5, 0), 2.0), Vertex("a1", complex(-0.5, 0), 2.0)),
    )


@pytest.fixture
def config_dir():
    return CONFIG_DIR


@pytest.fixture
def reference_table_path():
    return REFERENCE_TABLE


@pytest.fixture
def temp_data_dir(tmp_path):
    """Create a temporary data directory for testing."""
    data_dir = tmp_path / "data"
    data_dir.mkdir()
    (data_dir / "results").mkdir()
    (data_dir / "checkpoints").mkdir()
    return data_dir


@pytest.fixture
def minimal_config():
    """Smallest valid pipeline: the rectangle with slit and no stages."""
    return {"init": {"rect_slit": {"a1": -0.5, "a2": 0.5, "b": 0.5}}}
