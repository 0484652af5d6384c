import json
import sys
from pathlib import Path

import hypothesis
import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture
def fixtures():
    return FIXTURES


def fixture_bytes(name):
    return (FIXTURES / name).read_bytes()


def doc(name):
    return json.loads(fixture_bytes(name))
