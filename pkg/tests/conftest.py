import sys

import numpy as np
import pytest

from dtmamba.config import DTMambaConfig

# toy dimensions shared by the full-model checks
TOY = dict(T=8, S=4, N=2, n1=6, n2=4, d_state=4, e_fact=1, d_conv=2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_config():
    return DTMambaConfig(**TOY)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
