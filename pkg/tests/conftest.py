import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ug.kb import snapshot
from ug.reasoner import decide
from ug.scenario import parse_scenario

SCENARIO_DIR = Path(__file__).parent.parent / "scenarios"
CAKE_PATH = SCENARIO_DIR / "birthday_cake.ug"


@pytest.fixture(scope="session")
def cake_text():
    return CAKE_PATH.read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def cake_scenario(cake_text):
    return parse_scenario(cake_text)


@pytest.fixture(scope="session")
def cake_kb(cake_scenario):
    return snapshot(cake_scenario.kb)


@pytest.fixture(scope="session")
def cake_trace(cake_kb):
    _, trace = decide(cake_kb, cake_kb.decision_query)
    return trace
