import json
from pathlib import Path

import pytest

from patchpad.datagen import TaskSource, source_from_record
from patchpad.verify import InProcessExecutor

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


def load_fixture_sources() -> list[TaskSource]:
    with open(FIXTURES / "tasks.jsonl", encoding="utf-8") as handle:
        return [source_from_record(json.loads(line)) for line in handle if line.strip()]


@pytest.fixture(scope="session")
def sources() -> list[TaskSource]:
    return load_fixture_sources()


@pytest.fixture(scope="session")
def executor() -> InProcessExecutor:
    return InProcessExecutor()
