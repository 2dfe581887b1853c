import numpy as np
import pytest
import torch

from hrstyle.data import smoke_pair
from hrstyle.extractor import FeatureExtractor

torch.use_deterministic_algorithms(True)


@pytest.fixture(scope="session")
def fx():
    """Seeded untrained VGG19 up to conv5_1 (no pretrained weights offline)."""
    return FeatureExtractor.untrained(seed=0, depth="conv5_1")


@pytest.fixture(scope="session")
def fx64_tiny():
    """Double-precision extractor truncated after conv1_2 for gradient checks."""
    return FeatureExtractor.untrained(seed=0, depth="conv1_2", dtype=torch.float64)


@pytest.fixture(scope="session")
def smoke():
    return smoke_pair()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary -------------------------------------------------------

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or report.outcome != "passed":
        name = report.nodeid.split("::")[-1]
        prev = _ACCEPTANCE.get(name)
        if prev != "FAIL":
            _ACCEPTANCE[name] = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in sorted(_ACCEPTANCE.items()):
        terminalreporter.write_line(f"{status:4}  {name}")
