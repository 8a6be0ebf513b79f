import numpy as np
import pytest

from driftwatch.harness import ExperimentConfig, generate_fusion_training


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture(scope="session")
def default_fusion_training():
    """Detector outputs for the 170-example prior mix at n=50, k=100, m=100 (about 90 s)."""
    return generate_fusion_training(ExperimentConfig())


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
