"""Gluing tables, Neumann-Zagier data and the nzdatum-v1 file format."""
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Sequence, Tuple, Union

import sympy

from src.errors import IncidenceViolation, IntegerOverflow, SchemaError, SymplecticViolation

logger = logging.getLogger(__name__)

SCHEMA_NAME = "nzdatum-v1"
INT64_LIMIT = 2 ** 63

IntVector = Tuple[int, ...]
IntMatrix = Tuple[Tuple[int, ...], ...]


def as_matrix(rows: Sequence[Sequence[int]]) -> IntMatrix:
    return tuple(tuple(int(x) for x in row) for row in rows)


def as_vector(values: Sequence[int]) -> IntVector:
    return tuple(int(x) for x in values)


def _check_meridian(path: str, row: IntVector):
    """The meridian row (A_N | B_N) must be nonzero and primitive."""
    if not any(row):
        raise SchemaError(path, "meridian row must be nonzero")
    divisor = math.gcd(*row)
    if divisor != 1:
        raise SchemaError(path, f"meridian row {list(row)} is not primitive (gcd {divisor})")


@dataclass(frozen=True)
class GluingTables:
    """Edge, meridian and (optionally) longitude exponents of z, z' and z''.

    Rows 1..N are edge equations, row N+1 the meridian and the optional
    row N+2 the longitude. Columns are tetrahedra.
    """

    n: int
    g: IntMatrix
    gp: IntMatrix
    gpp: IntMatrix

    @property
    def has_longitude(self) -> bool:
        return len(self.g) == self.n + 2

    def validate(self):
        """Check table shapes and the one-cusp edge incidence rule."""
        for name, table in (("g", self.g), ("gp", self.gp), ("gpp", self.gpp)):
            if len(table) not in (self.n + 1, self.n + 2):
                raise SchemaError(f"gluing.{name}", f"expected {self.n + 1} or {self.n + 2} rows, got {len(table)}")
            if len(table) != len(self.g):
                raise SchemaError(f"gluing.{name}", "tables disagree on the number of rows")
            for r, row in enumerate(table):
                if len(row) != self.n:
                    raise SchemaError(f"gluing.{name}[{r}]", f"expected {self.n} entries, got {len(row)}")
            for r in range(self.n):
                bad = [x for x in table[r] if x not in (0, 1, 2)]
                if bad:
                    raise IncidenceViolation(f"edge row {r + 1} of {name} has entries outside {{0,1,2}}: {bad}")
            for i in range(self.n):
                total = sum(table[r][i] for r in range(self.n))
                if total != 2:
                    raise IncidenceViolation(
                        f"column {i + 1} of {name} sums to {total} over the edge rows, expected 2"
                    )
        r = self.n
        meridian = tuple(x - y for x, y in zip(self.g[r], self.gp[r])) + tuple(
            x - y for x, y in zip(self.gpp[r], self.gp[r])
        )
        _check_meridian(f"gluing.g[{r}]", meridian)

    def to_dict(self) -> dict:
        return {"g": [list(r) for r in self.g], "gp": [list(r) for r in self.gp], "gpp": [list(r) for r in self.gpp]}


@dataclass(frozen=True)
class Longitude:
    """Longitude row stored doubled: (2C, 2D, 2 eta_lambda)."""

    two_c: IntVector
    two_d: IntVector
    two_eta_lambda: int

    def to_dict(self) -> dict:
        return {"two_c": list(self.two_c), "two_d": list(self.two_d), "two_eta_lambda": self.two_eta_lambda}


@dataclass(frozen=True)
class NZDatum:
    """Neumann-Zagier matrices A, B and vector eta; row N is always the meridian.

    ``edge_labels[s]`` names the edge equation held in row ``s + 1`` and
    ``dropped_edge`` the one omitted, so edge changes stay traceable.
    """

    n: int
    a: IntMatrix
    b: IntMatrix
    eta: IntVector
    dropped_edge: int
    longitude: Optional[Longitude] = None
    edge_labels: Optional[IntVector] = None

    def __post_init__(self):
        if len(self.a) != self.n or len(self.b) != self.n or len(self.eta) != self.n:
            raise ValueError(f"NZ datum with n={self.n} needs {self.n} rows in a, b and eta")
        if any(len(row) != self.n for row in self.a + self.b):
            raise ValueError("NZ matrices must be square")
        if not 1 <= self.dropped_edge <= self.n:
            raise ValueError(f"dropped_edge {self.dropped_edge} out of range 1..{self.n}")
        if self.edge_labels is None:
            object.__setattr__(
                self, "edge_labels",
                tuple(self.n if s == self.dropped_edge else s for s in range(1, self.n)),
            )

    @property
    def has_longitude(self) -> bool:
        return self.longitude is not None

    def column(self, matrix: str, i: int) -> IntVector:
        rows = self.a if matrix == "a" else self.b
        return tuple(row[i] for row in rows)

    def validate(self) -> "NZDatum":
        """Raise SymplecticViolation unless the datum satisfies the NZ relations."""
        A = sympy.Matrix(self.a)
        B = sympy.Matrix(self.b)
        if A * B.T != B * A.T:
            raise SymplecticViolation("A B^T is not symmetric")
        rank = A.row_join(B).rank()
        if rank != self.n:
            raise SymplecticViolation(f"(A B) has rank {rank}, expected {self.n}")
        _check_meridian(f"nz.a[{self.n - 1}]", tuple(self.a[-1]) + tuple(self.b[-1]))
        if self.longitude is not None:
            pairing = (
                sum(x * y for x, y in zip(self.a[-1], self.longitude.two_d))
                - sum(x * y for x, y in zip(self.b[-1], self.longitude.two_c))
            )
            if pairing != 2:
                raise SymplecticViolation(f"meridian/longitude pairing A_N.D - B_N.C = {pairing}/2, expected 1")
        return self

    def replace(self, **changes) -> "NZDatum":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        payload = {
            "a": [list(r) for r in self.a],
            "b": [list(r) for r in self.b],
            "eta": list(self.eta),
            "dropped_edge": self.dropped_edge,
            "edge_labels": list(self.edge_labels),
        }
        return payload


def derive_nz(tables: GluingTables, dropped_edge: Optional[int] = None) -> NZDatum:
    """Build the NZ datum from gluing tables, omitting one edge equation.

    The meridian always becomes row N. If the dropped edge is I != N, the
    equation of edge N takes over row I.
    """
    tables.validate()
    n = tables.n
    dropped = n if dropped_edge is None else dropped_edge
    if not 1 <= dropped <= n:
        raise ValueError(f"dropped_edge must lie in 1..{n}, got {dropped}")

    labels = tuple(n if s == dropped else s for s in range(1, n))
    source_rows = [label - 1 for label in labels] + [n]

    a, b, eta = [], [], []
    for slot, r in enumerate(source_rows):
        a.append(tuple(x - y for x, y in zip(tables.g[r], tables.gp[r])))
        b.append(tuple(x - y for x, y in zip(tables.gpp[r], tables.gp[r])))
        base = 0 if slot == n - 1 else 2
        eta.append(base - sum(tables.gp[r]))

    longitude = None
    if tables.has_longitude:
        r = n + 1
        longitude = Longitude(
            two_c=tuple(x - y for x, y in zip(tables.g[r], tables.gp[r])),
            two_d=tuple(x - y for x, y in zip(tables.gpp[r], tables.gp[r])),
            two_eta_lambda=-sum(tables.gp[r]),
        )

    datum = NZDatum(n=n, a=tuple(a), b=tuple(b), eta=tuple(eta), dropped_edge=dropped,
                    longitude=longitude, edge_labels=labels)
    logger.debug("Derived NZ datum with N=%d, dropped edge %d", n, dropped)
    return datum.validate()


def tables_from_snappy(rows: Sequence[Sequence[int]]) -> GluingTables:
    """Convert SnapPy ``gluing_equations()`` rows into GluingTables.

    SnapPy lists, for each tetrahedron, the exponents of (z, z', z'') in
    consecutive columns; rows are the N edges, then meridian and longitude.
    """
    rows = as_matrix(rows)
    if not rows or len(rows[0]) % 3:
        raise SchemaError("gluing_equations", "expected 3N columns")
    n = len(rows[0]) // 3
    if len(rows) != n + 2:
        raise SchemaError("gluing_equations", f"expected {n + 2} rows for a one-cusp manifold, got {len(rows)}")
    g = tuple(tuple(row[3 * i] for i in range(n)) for row in rows)
    gp = tuple(tuple(row[3 * i + 1] for i in range(n)) for row in rows)
    gpp = tuple(tuple(row[3 * i + 2] for i in range(n)) for row in rows)
    return GluingTables(n=n, g=g, gp=gp, gpp=gpp)


@dataclass
class DatumDocument:
    """Everything an nzdatum-v1 file can hold."""

    n: int
    tables: Optional[GluingTables] = None
    datum: Optional[NZDatum] = None
    shapes: Optional[Tuple[Tuple[str, str], ...]] = None
    flattening: Optional[Tuple[IntVector, IntVector]] = None
    meta: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return str(self.meta.get("name", "unnamed"))

    def resolve_datum(self, dropped_edge: Optional[int] = None) -> NZDatum:
        """The stored NZ datum, or one derived from the gluing tables."""
        if self.datum is not None and (dropped_edge is None or dropped_edge == self.datum.dropped_edge):
            return self.datum
        if self.tables is None:
            raise SchemaError("gluing", "an NZ datum with another dropped edge needs gluing tables")
        return derive_nz(self.tables, dropped_edge)

    def to_dict(self) -> dict:
        payload: dict = {"schema": SCHEMA_NAME, "n": self.n, "meta": dict(self.meta)}
        if self.tables is not None:
            payload["gluing"] = self.tables.to_dict()
        if self.datum is not None:
            payload["nz"] = self.datum.to_dict()
            if self.datum.longitude is not None:
                payload["longitude"] = self.datum.longitude.to_dict()
        if self.shapes is not None:
            payload["shapes"] = [{"re": re, "im": im} for re, im in self.shapes]
        if self.flattening is not None:
            payload["flattening"] = {"f": list(self.flattening[0]), "fpp": list(self.flattening[1])}
        return payload


def _int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(path, f"expected integer, got {type(value).__name__}")
    if abs(value) >= INT64_LIMIT:
        raise IntegerOverflow(path, "entry exceeds the 64-bit range")
    return value


def _vector(value: Any, path: str, length: Optional[int] = None) -> IntVector:
    if not isinstance(value, list):
        raise SchemaError(path, "expected an array of integers")
    if length is not None and len(value) != length:
        raise SchemaError(path, f"expected {length} entries, got {len(value)}")
    return tuple(_int(x, f"{path}[{i}]") for i, x in enumerate(value))


def _matrix(value: Any, path: str, cols: int) -> IntMatrix:
    if not isinstance(value, list) or not value:
        raise SchemaError(path, "expected a non-empty array of arrays")
    return tuple(_vector(row, f"{path}[{r}]", cols) for r, row in enumerate(value))


def _decimal(value: Any, path: str) -> str:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return repr(value)
    if not isinstance(value, str):
        raise SchemaError(path, "expected a decimal string")
    try:
        float(value)
    except ValueError:
        raise SchemaError(path, f"not a decimal number: {value!r}") from None
    return value


def document_from_dict(payload: Any) -> DatumDocument:
    """Validate a parsed nzdatum-v1 payload."""
    if not isinstance(payload, dict):
        raise SchemaError("$", "expected a JSON object")
    schema = payload.get("schema", SCHEMA_NAME)
    if schema != SCHEMA_NAME:
        raise SchemaError("schema", f"unsupported schema {schema!r}")
    n = _int(payload.get("n"), "n")
    if n < 1:
        raise SchemaError("n", "tetrahedron count must be positive")

    tables = None
    if "gluing" in payload:
        gluing = payload["gluing"]
        if not isinstance(gluing, dict):
            raise SchemaError("gluing", "expected an object with g, gp, gpp")
        tables = GluingTables(
            n=n,
            g=_matrix(gluing.get("g"), "gluing.g", n),
            gp=_matrix(gluing.get("gp"), "gluing.gp", n),
            gpp=_matrix(gluing.get("gpp"), "gluing.gpp", n),
        )
        tables.validate()

    datum = None
    if "nz" in payload:
        nz = payload["nz"]
        if not isinstance(nz, dict):
            raise SchemaError("nz", "expected an object with a, b, eta, dropped_edge")
        a = _matrix(nz.get("a"), "nz.a", n)
        b = _matrix(nz.get("b"), "nz.b", n)
        if len(a) != n or len(b) != n:
            raise SchemaError("nz", f"a and b need {n} rows")
        if not any(a[-1]) and not any(b[-1]):
            raise SchemaError(f"nz.a[{n - 1}]", "meridian row must be nonzero")
        eta = _vector(nz.get("eta"), "nz.eta", n)
        dropped = _int(nz.get("dropped_edge", n), "nz.dropped_edge")
        if not 1 <= dropped <= n:
            raise SchemaError("nz.dropped_edge", f"must lie in 1..{n}")
        labels = None
        if "edge_labels" in nz:
            labels = _vector(nz["edge_labels"], "nz.edge_labels", n - 1)
        longitude = None
        if "longitude" in payload:
            lon = payload["longitude"]
            if not isinstance(lon, dict):
                raise SchemaError("longitude", "expected an object with two_c, two_d, two_eta_lambda")
            longitude = Longitude(
                two_c=_vector(lon.get("two_c"), "longitude.two_c", n),
                two_d=_vector(lon.get("two_d"), "longitude.two_d", n),
                two_eta_lambda=_int(lon.get("two_eta_lambda"), "longitude.two_eta_lambda"),
            )
        datum = NZDatum(n=n, a=a, b=b, eta=eta, dropped_edge=dropped,
                        longitude=longitude, edge_labels=labels).validate()
        if tables is not None:
            derived = derive_nz(tables, dropped)
            if (derived.a, derived.b, derived.eta) != (datum.a, datum.b, datum.eta):
                raise SchemaError("nz", "matrices disagree with the gluing tables")
    elif tables is not None:
        datum = derive_nz(tables)

    if datum is None:
        raise SchemaError("$", "file needs gluing tables or an nz block")

    shapes = None
    if "shapes" in payload:
        raw = payload["shapes"]
        if not isinstance(raw, list) or len(raw) != n:
            raise SchemaError("shapes", f"expected {n} shape entries")
        shapes = tuple(
            (_decimal(s.get("re"), f"shapes[{i}].re"), _decimal(s.get("im"), f"shapes[{i}].im"))
            if isinstance(s, dict) else _shape_error(i)
            for i, s in enumerate(raw)
        )

    flattening = None
    if "flattening" in payload:
        flat = payload["flattening"]
        if not isinstance(flat, dict):
            raise SchemaError("flattening", "expected an object with f and fpp")
        flattening = (_vector(flat.get("f"), "flattening.f", n), _vector(flat.get("fpp"), "flattening.fpp", n))

    meta = payload.get("meta", {})
    if not isinstance(meta, dict):
        raise SchemaError("meta", "expected an object")
    return DatumDocument(n=n, tables=tables, datum=datum, shapes=shapes, flattening=flattening, meta=meta)


def _shape_error(i: int):
    raise SchemaError(f"shapes[{i}]", "expected an object with re and im")


def load_datum(path: Union[str, Path]) -> DatumDocument:
    """Load and validate an nzdatum-v1 file."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON in {path}: {exc}") from None
    document = document_from_dict(payload)
    logger.info("Loaded %s (N=%d) from %s", document.name, document.n, path)
    return document


def canonical_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def save_datum(document: Union[DatumDocument, NZDatum], path: Union[str, Path]) -> Path:
    """Write a document (or a bare datum) in canonical nzdatum-v1 form."""
    if isinstance(document, NZDatum):
        document = DatumDocument(n=document.n, datum=document)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(document.to_dict()))
    return path


def datum_fingerprint(datum: NZDatum) -> str:
    """Short SHA-256 of the canonical datum, used in move certificates."""
    payload = datum.to_dict()
    if datum.longitude is not None:
        payload["longitude"] = datum.longitude.to_dict()
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()[:16]
