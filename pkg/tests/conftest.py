import json
import shutil
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"

# filled by test_acceptance.py, printed once at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fixture_manifest():
    return json.loads((FIXTURES / "phantom_fixture.json").read_text())


@pytest.fixture
def manifest_copy(tmp_path):
    dst = tmp_path / "phantom_fixture.json"
    shutil.copy(FIXTURES / "phantom_fixture.json", dst)
    return dst
