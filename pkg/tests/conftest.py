import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def m1_panel():
    from vbqfa.simulate import DgpConfig, generate_panel

    return generate_panel(DgpConfig(T=100, n=50, seed=2024))


@pytest.fixture(scope="session")
def sample_csv():
    from pathlib import Path

    import vbqfa

    return Path(vbqfa.__file__).with_name("data") / "sample_panel.csv"


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
