import numpy as np
import pytest

from elastic_afem.mesh import preset_mesh


def refined(name, levels):
    mesh = preset_mesh(name)
    for _ in range(levels):
        mesh = mesh.uniform_refine()
    return mesh


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[k])
