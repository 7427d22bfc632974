import sys
from pathlib import Path

import pytest

from carbonforge import efgen, ingestion

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo acceptance verdict lines past output capture."""
    for name, module in sys.modules.items():
        if name.rpartition(".")[2] == "test_acceptance":
            lines = getattr(module, "VERDICTS", None)
            if lines:
                terminalreporter.section("acceptance verdicts")
                for line in lines:
                    terminalreporter.write_line(line)
            return


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def efdb():
    result = ingestion.parse_ef_database(FIXTURES / "efdb_fixture.jsonl")
    assert not result.rejected
    return list(result.records)


@pytest.fixture(scope="session")
def material_db():
    return efgen.load_material_db(FIXTURES / "materials_fixture.jsonl")


@pytest.fixture(scope="session")
def corpus():
    return ingestion.load_corpus(FIXTURES / "corpus")
