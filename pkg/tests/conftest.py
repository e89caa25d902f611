import numpy as np
import pytest

from vemfacet.mesh import FamilySpec, generate_family, geometry, parse_mesh

UNIT_SQUARE = """polymesh-v1
dimension 2
vertices 4
0 0
1 0
1 1
0 1
edges 4
0 1
1 2
2 3
0 3
cells 1
4 0 1 2 3
"""

UNIT_CUBE = """polymesh-v1
dimension 3
vertices 8
0 0 0
1 0 0
0 1 0
1 1 0
0 0 1
1 0 1
0 1 1
1 1 1
edges 12
0 1
0 2
0 4
1 3
1 5
2 3
2 6
3 7
4 5
4 6
5 7
6 7
faces 6
4 0 2 6 4
4 1 3 7 5
4 0 4 5 1
4 2 6 7 3
4 0 1 3 2
4 4 5 7 6
cells 1
6 0 -1 1 1 2 -1 3 1 4 -1 5 1
"""


@pytest.fixture(scope="session")
def square_mesh():
    return parse_mesh(UNIT_SQUARE)


@pytest.fixture(scope="session")
def cube_mesh():
    return parse_mesh(UNIT_CUBE)


@pytest.fixture(scope="session")
def square(square_mesh):
    return geometry(square_mesh, 0)


@pytest.fixture(scope="session")
def cube(cube_mesh):
    return geometry(cube_mesh, 0)


@pytest.fixture(scope="session")
def hexagon():
    return geometry(generate_family(FamilySpec("hexagons", (1 / 4,)))[0], 5)


@pytest.fixture(scope="session")
def distorted_quad():
    return geometry(generate_family(FamilySpec("distorted-quads", (1 / 4,), jitter=0.2, seed=3))[0], 6)


@pytest.fixture(scope="session")
def distorted_hex():
    return geometry(generate_family(FamilySpec("distorted-hexes", (1 / 3,), jitter=0.2, seed=3))[0], 13)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance verdict lines, echoed in the terminal summary even when output is captured
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
