import json
import os

import pytest

from optauction.config import get_settings
from optauction.schemas.responses import PriorDocument
from optauction.services.hardness import CatFormula
from optauction.services.priors import JointPrior


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Settings are cached per process; tests start from the defaults."""
    for key in list(os.environ):
        if key.startswith("OPTAUCTION_"):
            monkeypatch.delenv(key)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def uniform22():
    return JointPrior.uniform([[1, 2], [1, 2]])


@pytest.fixture
def correlated():
    return JointPrior.from_lists([[1, 2], [1, 2]], [["1/2", 0], [0, "1/2"]])


@pytest.fixture
def uniform222():
    return JointPrior.uniform([[1, 2], [1, 2], [1, 2]])


@pytest.fixture
def single_clause():
    return CatFormula.from_strings(1, 1, 1, [["x1", "y1", "z1"]])


@pytest.fixture
def write_prior(tmp_path):
    def _write(prior: JointPrior, name: str = "prior.json", sparse: bool = True) -> str:
        path = tmp_path / name
        path.write_text(PriorDocument.from_prior(prior, sparse=sparse).dump())
        return str(path)
    return _write


@pytest.fixture
def write_json(tmp_path):
    def _write(payload, name: str) -> str:
        path = tmp_path / name
        path.write_text(json.dumps(payload))
        return str(path)
    return _write

