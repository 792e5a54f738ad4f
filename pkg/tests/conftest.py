import pytest

from dbinsights.llm import LlmGateway, MockBackend

from mockkit import make_schools_db, scripted_gateway


@pytest.fixture
def schools_db(tmp_path):
    return make_schools_db(tmp_path / "schools_fixture.db")


@pytest.fixture
def pipeline_gateway():
    return scripted_gateway()


@pytest.fixture
def mock_gateway():
    """Bare mock gateway; tests add their own rules."""
    mock = MockBackend()
    return LlmGateway(mock)
