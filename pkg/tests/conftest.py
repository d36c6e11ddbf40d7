import numpy as np
import pytest
from hypothesis import settings

from nfcodec.pointcloud_io import PointCloud

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def sphere_shell(radius=25.0, centre=(128.3, 127.6, 128.9), depth=8):
    """Voxels within half a unit of a sphere surface."""
    side = 1 << depth
    lo = np.floor(np.array(centre) - radius - 1).astype(int).clip(0, side - 1)
    hi = np.ceil(np.array(centre) + radius + 2).astype(int).clip(1, side)
    g = np.indices(tuple(hi - lo)).reshape(3, -1).T + lo
    d = np.linalg.norm(g - np.asarray(centre), axis=1)
    return PointCloud(g[np.abs(d - radius) < 0.5], depth)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def sphere():
    return sphere_shell()


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
