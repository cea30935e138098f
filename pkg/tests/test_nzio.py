import copy
import json

import pytest

from src.config import fixture_path
from src.data.nzio import (
    GluingTables,
    Longitude,
    NZDatum,
    datum_fingerprint,
    derive_nz,
    document_from_dict,
    load_datum,
    save_datum,
    tables_from_snappy,
)
from src.errors import IncidenceViolation, IntegerOverflow, SchemaError, SymplecticViolation


@pytest.fixture
def payload():
    return json.loads(fixture_path("4_1.json").read_text())


def test_fixture_loads_with_longitude(document_4_1):
    datum = document_4_1.datum
    assert document_4_1.name == "4_1"
    assert datum.a == ((2, 2), (1, 1))
    assert datum.b == ((1, 1), (1, 0))
    assert datum.eta == (2, 1)
    assert datum.dropped_edge == 2
    assert datum.edge_labels == (1,)
    assert datum.longitude.two_c == (-4, 0)
    assert datum.longitude.two_d == (-2, 0)
    assert datum.longitude.two_eta_lambda == -2


def test_derive_nz_matches_stored_block(document_4_1):
    derived = derive_nz(document_4_1.tables)
    assert (derived.a, derived.b, derived.eta) == (document_4_1.datum.a, document_4_1.datum.b,
                                                   document_4_1.datum.eta)
    assert derived.longitude == document_4_1.datum.longitude


def test_dropping_the_first_edge_moves_edge_n_into_its_row(document_4_1):
    datum = derive_nz(document_4_1.tables, dropped_edge=1)
    assert datum.edge_labels == (2,)
    assert datum.a == ((-2, -2), (1, 1))
    assert datum.b == ((-1, -1), (1, 0))
    assert datum.eta == (-2, 1)


def test_resolve_datum_rederives_for_another_dropped_edge(document_4_1):
    assert document_4_1.resolve_datum() is document_4_1.datum
    assert document_4_1.resolve_datum(1).dropped_edge == 1


def test_snappy_rows_regroup_by_tetrahedron(document_4_1):
    tables = document_4_1.tables
    rows = [
        [x for i in range(tables.n) for x in (tables.g[r][i], tables.gp[r][i], tables.gpp[r][i])]
        for r in range(tables.n + 2)
    ]
    assert tables_from_snappy(rows) == tables


def test_snappy_rows_need_three_columns_per_tetrahedron():
    with pytest.raises(SchemaError):
        tables_from_snappy([[1, 0], [0, 1]])


def test_edge_incidence_is_enforced(document_4_1):
    tables = document_4_1.tables
    g = (tables.g[0], (0, 1)) + tables.g[2:]
    with pytest.raises(IncidenceViolation):
        GluingTables(n=tables.n, g=g, gp=tables.gp, gpp=tables.gpp).validate()


def test_schema_name_is_checked(payload):
    payload["schema"] = "nzdatum-v0"
    with pytest.raises(SchemaError, match="schema"):
        document_from_dict(payload)


def test_non_integer_entries_report_their_path(payload):
    payload["nz"]["a"][0][1] = True
    with pytest.raises(SchemaError) as info:
        document_from_dict(payload)
    assert info.value.path == "nz.a[0][1]"


def test_overflowing_entries(payload):
    payload["nz"]["eta"][0] = 2 ** 63
    with pytest.raises(IntegerOverflow):
        document_from_dict(payload)


def test_nz_block_must_agree_with_gluing_tables(payload):
    payload["nz"]["eta"] = [2, 3]
    with pytest.raises(SchemaError, match="disagree"):
        document_from_dict(payload)


def test_shapes_are_kept_as_decimal_strings(payload):
    payload["shapes"][0]["re"] = "not-a-number"
    with pytest.raises(SchemaError, match="shapes"):
        document_from_dict(payload)


def test_gluing_tables_alone_are_enough(payload):
    reduced = copy.deepcopy(payload)
    del reduced["nz"], reduced["longitude"]
    document = document_from_dict(reduced)
    assert document.datum.a == ((2, 2), (1, 1))
    assert document.datum.has_longitude


def test_non_symplectic_datum_is_rejected():
    datum = NZDatum(n=2, a=((1, 0), (0, 1)), b=((0, 1), (0, 0)), eta=(0, 0), dropped_edge=2)
    with pytest.raises(SymplecticViolation):
        datum.validate()


def test_meridian_row_must_be_primitive():
    datum = NZDatum(n=2, a=((2, 2), (2, 2)), b=((1, 1), (2, 0)), eta=(0, 0), dropped_edge=2)
    with pytest.raises(SchemaError, match="not primitive"):
        datum.validate()


def test_gluing_meridian_must_be_primitive(payload):
    gluing = payload["gluing"]
    gluing["g"][2] = [0, 2]
    gluing["gp"][2] = [-2, 0]
    tables = GluingTables(2, *(tuple(map(tuple, gluing[k])) for k in ("g", "gp", "gpp")))
    with pytest.raises(SchemaError, match="gcd 2"):
        tables.validate()


def test_longitude_pairing_is_checked(datum_4_1):
    bad = datum_4_1.replace(longitude=Longitude((-2, 0), (-2, 0), -2))
    with pytest.raises(SymplecticViolation, match="pairing"):
        bad.validate()


def test_save_and_reload(tmp_path, document_4_1):
    path = save_datum(document_4_1, tmp_path / "out" / "4_1.json")
    reloaded = load_datum(path)
    assert reloaded.datum == document_4_1.datum
    assert reloaded.shapes == document_4_1.shapes
    assert reloaded.flattening == document_4_1.flattening
    assert path.read_text() == save_datum(reloaded, tmp_path / "again.json").read_text()


def test_invalid_json_is_a_schema_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(SchemaError):
        load_datum(path)


def test_fingerprint_is_stable_and_sensitive(datum_4_1):
    assert datum_fingerprint(datum_4_1) == datum_fingerprint(datum_4_1.replace())
    assert datum_fingerprint(datum_4_1) != datum_fingerprint(datum_4_1.replace(eta=(2, 3)))
