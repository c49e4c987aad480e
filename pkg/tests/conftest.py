import sys
from pathlib import Path

import hypothesis
import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from flakesim.colorimetry import default_color_system  # noqa: E402
from flakesim.materials import DEFAULT_GRID, data_dir, default_library  # noqa: E402

np.seterr(all="warn", under="ignore")

hypothesis.settings.register_profile("default", max_examples=100, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def lib():
    return default_library()


@pytest.fixture(scope="session")
def d65():
    return default_color_system(DEFAULT_GRID)


@pytest.fixture(scope="session")
def illum_e():
    return default_color_system(DEFAULT_GRID, illuminant="e")


@pytest.fixture(scope="session")
def references():
    return sorted((data_dir() / "references").glob("*.png"))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
