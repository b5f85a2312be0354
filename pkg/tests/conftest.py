import numpy as np
import pytest

from homog.microstructure import VoxelGrid
from homog.tensors import isotropic_stiffness


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def two_phase():
    return [isotropic_stiffness((1.0, 1.0)), isotropic_stiffness((4.0, 3.0))]


@pytest.fixture
def random_grid4(rng, two_phase):
    return VoxelGrid(rng.integers(0, 2, (4, 4, 4)), two_phase)


def random_sym(rng, n=None, complex_=False):
    shape = (6,) if n is None else (n, 6)
    a = rng.standard_normal(shape)
    if complex_:
        a = a + 1j * rng.standard_normal(shape)
    return a


def random_spd_voigt(rng):
    """A random positive definite stiffness in tensorial Voigt form."""
    s = np.sqrt([1, 1, 1, 2, 2, 2])
    A = rng.standard_normal((6, 6))
    M = A @ A.T + 6 * np.eye(6)
    return M / np.outer(s, s)


# -- acceptance verdict lines ---------------------------------------------------------

_VERDICTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    failed = report.failed
    prev = _VERDICTS.get(marker[0])
    _VERDICTS[marker[0]] = (marker[1], failed or (prev is not None and prev[1]))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        report.criterion = m.args


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        title, failed = _VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'FAIL' if failed else 'PASS'}  {title}")
