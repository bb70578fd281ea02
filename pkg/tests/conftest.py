import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from beaconlab import config as cfgmod  # noqa: E402


@pytest.fixture(scope="session")
def cfg():
    return cfgmod.default_config()


@pytest.fixture(scope="session")
def small_cfg(cfg):
    return cfg.with_experiment(replicas=4)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance")
    for name, ok, detail in results:
        terminalreporter.write_line(acceptance._line(name, ok, detail))
