import os

import pytest

from lcbench.simulator import ScenarioConfig, generate_benchmark


def pytest_addoption(parser):
    parser.addoption("--highd", action="store", default=os.environ.get("LCBENCH_HIGHD"),
                     help="directory with HighD recordings for the gated data checks")


@pytest.fixture(scope="session")
def highd_path(request):
    return request.config.getoption("--highd")


@pytest.fixture(scope="session")
def small_benchmark():
    """A few hundred simulated samples with the driven maneuvers as labels."""
    cfg = ScenarioConfig(seed=4, duration=600.0, n_cars=50, n_trucks=8)
    return generate_benchmark(cfg, "noisy_nonlinear", hidden_strength=20.0)


ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one verdict line per acceptance criterion; printed at the end of the run."""
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
