import numpy as np
import pytest

from eitsample.excitation import base_pattern, rotation_scheme
from eitsample.forward import ForwardModel, ImpedanceSet
from eitsample.mesh import DomainSpec, build_disc_mesh


@pytest.fixture(scope="session")
def domain():
    return DomainSpec(radius=0.1, electrode_count=16, electrode_half_width=0.12)


@pytest.fixture(scope="session")
def mesh2000(domain):
    return build_disc_mesh(domain, 2000)


@pytest.fixture(scope="session")
def coarse_mesh(domain):
    return build_disc_mesh(domain, 300)


@pytest.fixture(scope="session")
def patterns():
    return rotation_scheme(base_pattern(16))


@pytest.fixture(scope="session")
def model2000(mesh2000):
    return ForwardModel(mesh2000, ImpedanceSet.uniform(16, 0.1))


@pytest.fixture(scope="session")
def coarse_model(coarse_mesh):
    return ForwardModel(coarse_mesh, ImpedanceSet.uniform(16, 0.1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance report -------------------------------------------------------------

_VERDICTS: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    _VERDICTS[criterion] = (passed, detail)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria (slow)")


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        passed, detail = _VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
