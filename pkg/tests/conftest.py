import numpy as np
import pytest

from morphosim.mesh import build_disk_mesh, build_polygon_mesh

L_SHAPE = np.array([[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]], dtype=float)


@pytest.fixture(scope="session")
def disk10():
    return build_disk_mesh(1.0, 0.1)


@pytest.fixture(scope="session")
def disk05():
    return build_disk_mesh(1.0, 0.05)


@pytest.fixture(scope="session")
def square():
    return build_polygon_mesh(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float), 0.25)


@pytest.fixture(scope="session")
def lshape():
    return build_polygon_mesh(L_SHAPE, 0.2)


ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    """Remember one acceptance outcome for the end-of-session summary."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
