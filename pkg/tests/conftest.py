import json
from pathlib import Path

import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

SCHEMA_DIR = Path(__file__).resolve().parents[1] / "src" / "winnerdesign" / "schemas"

# criterion number -> (passed, description); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def schema():
    def load(name):
        return json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text())

    return load


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, desc = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {desc}")
