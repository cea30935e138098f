"""Shared fixtures: the figure-eight knot and 9_12 data, solved shapes, flattenings and invariants."""
import pytest

from src.config import fixture_path
from src.data.nzio import load_datum
from src.linalg.exactla import Flattening, solve_flattening
from src.numerics import gluesolve, mpnum
from src.perturbative.invariants import compute_invariants

BITS = 256

FIXTURE_9_12 = fixture_path("9_12.json")


@pytest.fixture(scope="session")
def ctx():
    return mpnum.get_context(BITS)


@pytest.fixture(scope="session")
def document_4_1():
    return load_datum(fixture_path("4_1.json"))


@pytest.fixture(scope="session")
def datum_4_1(document_4_1):
    return document_4_1.datum


@pytest.fixture(scope="session")
def shapes_4_1(document_4_1, datum_4_1):
    return gluesolve.solve_shapes(datum_4_1, initial=list(document_4_1.shapes), bits=BITS)


@pytest.fixture(scope="session")
def flattening_4_1(document_4_1, datum_4_1):
    f, fpp = document_4_1.flattening
    return Flattening.from_pair(f, fpp, datum_4_1).validate(datum_4_1)


@pytest.fixture(scope="session")
def longitude_flattening_4_1(datum_4_1):
    return Flattening.from_pair((0, 0), (1, 1), datum_4_1).validate(datum_4_1)


@pytest.fixture(scope="session")
def invariants_4_1(datum_4_1, shapes_4_1, flattening_4_1):
    return compute_invariants(datum_4_1, shapes_4_1, flattening_4_1, loops=3)


@pytest.fixture(scope="session")
def moves_4_1_path():
    return fixture_path("moves_4_1.json")


@pytest.fixture(scope="session")
def document_9_12(tmp_path_factory):
    """The shipped 9_12 fixture, or a fresh SnapPy export when it is absent."""
    if FIXTURE_9_12.exists():
        return load_datum(FIXTURE_9_12)
    pytest.importorskip("snappy", reason="9_12 needs the shipped fixture or SnapPy to export it")
    import export_fixture

    return load_datum(export_fixture.export("9_12", str(tmp_path_factory.mktemp("fixtures") / "9_12.json")))


@pytest.fixture(scope="session")
def datum_9_12(document_9_12):
    return document_9_12.datum


@pytest.fixture(scope="session")
def shapes_9_12(document_9_12, datum_9_12):
    return gluesolve.solve_shapes(datum_9_12, initial=list(document_9_12.shapes), bits=BITS)


@pytest.fixture(scope="session")
def flattening_9_12(datum_9_12):
    return solve_flattening(datum_9_12)


@pytest.fixture(scope="session")
def invariants_9_12(datum_9_12, shapes_9_12, flattening_9_12):
    return compute_invariants(datum_9_12, shapes_9_12, flattening_9_12, loops=3)
