import json
from fractions import Fraction

import pytest

from optauction import SCHEMA_VERSION
from optauction.errors import PriorValidationError, SizeGuardError
from optauction.schemas.responses import (
    ErrorResponse,
    MechanismDocument,
    PriorDocument,
    load_mechanism,
    load_prior,
)
from optauction.services.mechanism import verify_truthful
from optauction.services.solve2 import solve_discrete2


@pytest.mark.parametrize("sparse", [True, False])
def test_prior_document(correlated, write_prior, sparse):
    path = write_prior(correlated, sparse=sparse)
    payload = json.loads(open(path).read())
    assert payload["schema_version"] == SCHEMA_VERSION
    loaded = load_prior(path)
    assert loaded.grid == correlated.grid
    assert loaded.masses.tolist() == correlated.masses.tolist()


def test_sparse_entries_skip_zero_mass(correlated):
    doc = PriorDocument.from_prior(correlated)
    assert doc.pmf.entries == [["1/2", 0, 0], ["1/2", 1, 1]]


def test_sparse_duplicates_accumulate(write_json):
    path = write_json(
        {"bidders": 1, "values": [[1, 2]], "pmf": {"shape": [2], "entries": [["1/4", 1], ["1/4", 1]]}},
        "dup.json",
    )
    assert load_prior(path).masses.tolist() == [0, Fraction(1, 2)]


@pytest.mark.parametrize("payload, message", [
    ({"bidders": 2, "values": [[1, 2]], "pmf": [[1, 1]]}, "declares 2 bidders"),
    ({"bidders": 1, "values": [[1, 2]], "pmf": {"shape": [3], "entries": []}}, "does not match"),
    ({"bidders": 1, "values": [[1, 2]], "pmf": {"shape": [2], "entries": [["1", 5]]}}, "outside the grid"),
    ({"bidders": 1, "values": [[1, 2]], "pmf": {"shape": [2], "entries": [["1"]]}}, "needs a mass"),
    ({"bidders": 1, "values": [[1, 2]], "pmf": [0.5, 0.5]}, "Floats"),
    ({"values": [[1, 2]], "pmf": [1, 1]}, "Invalid prior"),
])
def test_prior_document_errors(write_json, payload, message):
    with pytest.raises(PriorValidationError, match=message):
        load_prior(write_json(payload, "bad.json"))


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(PriorValidationError, match="not found"):
        load_prior(tmp_path / "absent.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    with pytest.raises(PriorValidationError, match="not valid JSON"):
        load_prior(broken)


def test_mechanism_document(uniform22, tmp_path):
    mech = solve_discrete2(uniform22).mechanism
    path = tmp_path / "mech.json"
    path.write_text(MechanismDocument.from_mechanism(mech).dump())
    loaded = load_mechanism(path)
    assert loaded.allocation.winners.tolist() == mech.allocation.winners.tolist()
    assert loaded.payments.tolist() == mech.payments.tolist()
    assert verify_truthful(loaded).ok


def test_mechanism_document_shape_checked(uniform22):
    doc = MechanismDocument.from_mechanism(solve_discrete2(uniform22).mechanism)
    doc.allocation = [[0, 1]]
    with pytest.raises(PriorValidationError, match="Allocation shape"):
        doc.to_mechanism()


def test_error_response():
    exc = SizeGuardError("too big", {"limit": 3})
    doc = json.loads(ErrorResponse(error=exc.code, message=exc.message, detail=exc.detail).dump())
    assert doc == {"schema_version": SCHEMA_VERSION, "error": "size_guard", "message": "too big", "detail": {"limit": 3}}
