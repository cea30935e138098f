"""Exact integer linear algebra on Neumann-Zagier data.

Covers the Hermite normal form, the flattening solver, symplectic checks and
the triangulation moves (quad rotation, edge change, meridian move,
flattening swap, 2-3 / 3-2 moves, quad normalization). Every move returns a
MoveResult whose certificate records the input/output fingerprints and, when
a flattening is known, the predicted sign change of the torsion.
"""
import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Literal, Optional, Sequence, Tuple

import sympy

from src.data.nzio import IntMatrix, IntVector, Longitude, NZDatum, datum_fingerprint
from src.errors import DegenerateMove, NoIntegerSolution, QuadMismatch, SchemaError, SymplecticViolation
from src.numerics import mpnum

logger = logging.getLogger(__name__)

Direction = Literal["fwd", "bwd"]
ShapeVector = Tuple  # tuple of mpc shapes z_i


# ---------------------------------------------------------------------------
# Integer matrix helpers
# ---------------------------------------------------------------------------

def identity(n: int) -> IntMatrix:
    return tuple(tuple(int(i == j) for j in range(n)) for i in range(n))


def transpose(m: Sequence[Sequence[int]]) -> IntMatrix:
    return tuple(zip(*m)) if m else ()


def mat_vec(m: Sequence[Sequence[int]], v: Sequence[int]) -> IntVector:
    return tuple(sum(x * y for x, y in zip(row, v)) for row in m)


def mat_mul(a: Sequence[Sequence[int]], b: Sequence[Sequence[int]]) -> IntMatrix:
    cols = transpose(b)
    return tuple(tuple(sum(x * y for x, y in zip(row, col)) for col in cols) for row in a)


def determinant(m: Sequence[Sequence[int]]) -> int:
    return int(sympy.Matrix(m).det()) if m else 1


def hnf(matrix: Sequence[Sequence[int]]) -> Tuple[IntMatrix, IntMatrix]:
    """Row-style Hermite normal form.

    Returns (H, U) with U unimodular and U M = H. Pivots of H are positive,
    entries below a pivot vanish and entries above it lie in [0, pivot).
    """
    rows = [list(r) for r in matrix]
    m = len(rows)
    n = len(rows[0]) if m else 0
    u = [list(r) for r in identity(m)]

    def swap(i, j):
        rows[i], rows[j] = rows[j], rows[i]
        u[i], u[j] = u[j], u[i]

    def add_multiple(target, source, q):
        rows[target] = [x - q * y for x, y in zip(rows[target], rows[source])]
        u[target] = [x - q * y for x, y in zip(u[target], u[source])]

    pivot_row = 0
    for col in range(n):
        if pivot_row == m:
            break
        while True:
            nonzero = [r for r in range(pivot_row, m) if rows[r][col]]
            if not nonzero:
                break
            best = min(nonzero, key=lambda r: (abs(rows[r][col]), r))
            swap(pivot_row, best)
            clean = True
            for r in range(pivot_row + 1, m):
                if rows[r][col]:
                    add_multiple(r, pivot_row, rows[r][col] // rows[pivot_row][col])
                    clean = clean and rows[r][col] == 0
            if clean:
                break
        if not rows[pivot_row][col]:
            continue
        if rows[pivot_row][col] < 0:
            rows[pivot_row] = [-x for x in rows[pivot_row]]
            u[pivot_row] = [-x for x in u[pivot_row]]
        pivot = rows[pivot_row][col]
        for r in range(pivot_row):
            add_multiple(r, pivot_row, rows[r][col] // pivot)
        pivot_row += 1

    return as_int_matrix(rows), as_int_matrix(u)


def as_int_matrix(rows) -> IntMatrix:
    return tuple(tuple(int(x) for x in r) for r in rows)


def solve_integer_system(rows: Sequence[Sequence[int]], rhs: Sequence[int]) -> Tuple[IntVector, List[IntVector]]:
    """Particular solution and kernel-lattice basis of M x = rhs over the integers."""
    cols = len(rows[0])
    h, u = hnf(transpose(rows))
    pivots = []
    for row in h:
        nz = [c for c, x in enumerate(row) if x]
        if not nz:
            break
        pivots.append(nz[0])
    rank = len(pivots)

    y = [0] * cols
    for j, p in enumerate(pivots):
        acc = rhs[p] - sum(h[k][p] * y[k] for k in range(j))
        if acc % h[j][p]:
            raise NoIntegerSolution(f"no integer solution: pivot {h[j][p]} does not divide {acc}")
        y[j] = acc // h[j][p]

    x0 = tuple(sum(u[j][c] * y[j] for j in range(cols)) for c in range(cols))
    if mat_vec(rows, x0) != tuple(rhs):
        raise NoIntegerSolution("system is inconsistent")
    kernel = [tuple(u[j]) for j in range(rank, cols)]
    return x0, kernel


# ---------------------------------------------------------------------------
# Flattenings
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Flattening:
    """Integer triples (f, f', f'') with f + f' + f'' = 1 solving A f + B f'' = eta."""

    f: IntVector
    fp: IntVector
    fpp: IntVector
    longitude_compatible: bool = False

    @classmethod
    def from_pair(cls, f: Sequence[int], fpp: Sequence[int], datum: Optional[NZDatum] = None) -> "Flattening":
        f, fpp = tuple(int(x) for x in f), tuple(int(x) for x in fpp)
        fp = tuple(1 - x - y for x, y in zip(f, fpp))
        compatible = datum is not None and _longitude_residual(datum, f, fpp) == 0
        return cls(f=f, fp=fp, fpp=fpp, longitude_compatible=compatible)

    def triple(self, i: int) -> Tuple[int, int, int]:
        return self.f[i], self.fp[i], self.fpp[i]

    def violations(self, datum: NZDatum) -> List[str]:
        problems = []
        if any(x + y + z != 1 for x, y, z in zip(self.f, self.fp, self.fpp)):
            problems.append("f + f' + f'' != 1")
        lhs = tuple(x + y for x, y in zip(mat_vec(datum.a, self.f), mat_vec(datum.b, self.fpp)))
        if lhs != datum.eta:
            problems.append(f"A f + B f'' = {lhs}, expected {datum.eta}")
        if self.longitude_compatible and _longitude_residual(datum, self.f, self.fpp) != 0:
            problems.append("C f + D f'' != eta_lambda")
        return problems

    def validate(self, datum: NZDatum) -> "Flattening":
        problems = self.violations(datum)
        if problems:
            raise SchemaError("flattening", "; ".join(problems))
        return self

    def to_dict(self) -> dict:
        return {"f": list(self.f), "fp": list(self.fp), "fpp": list(self.fpp),
                "longitude_compatible": self.longitude_compatible}


def _longitude_residual(datum: NZDatum, f: Sequence[int], fpp: Sequence[int]) -> Optional[int]:
    lon = datum.longitude
    if lon is None:
        return None
    return (sum(c * x for c, x in zip(lon.two_c, f)) + sum(d * x for d, x in zip(lon.two_d, fpp))
            - lon.two_eta_lambda)


def flattening_lattice(datum: NZDatum, require_longitude: bool = False) -> Tuple[IntVector, List[IntVector]]:
    """Affine solution lattice of the flattening equations in the unknowns (f, f'')."""
    rows = [tuple(a) + tuple(b) for a, b in zip(datum.a, datum.b)]
    rhs = list(datum.eta)
    if require_longitude:
        if datum.longitude is None:
            raise ValueError("a longitude-compatible flattening needs longitude data")
        rows.append(tuple(datum.longitude.two_c) + tuple(datum.longitude.two_d))
        rhs.append(datum.longitude.two_eta_lambda)
    return solve_integer_system(rows, rhs)


def _dot(u, v) -> int:
    return sum(x * y for x, y in zip(u, v))


def _size_reduce(basis: List[List[int]]) -> List[List[int]]:
    changed = True
    while changed:
        changed = False
        for i, j in ((i, j) for i in range(len(basis)) for j in range(len(basis)) if i != j):
            norm_j = _dot(basis[j], basis[j])
            if not norm_j:
                continue
            q = round(sympy.Rational(_dot(basis[i], basis[j]), norm_j))
            if q:
                candidate = [x - q * y for x, y in zip(basis[i], basis[j])]
                if _dot(candidate, candidate) < _dot(basis[i], basis[i]):
                    basis[i] = candidate
                    changed = True
    return basis


def _flattening_key(x: Sequence[int]) -> Tuple[int, Tuple[int, ...]]:
    return sum(abs(v) for v in x), tuple(x)


def _minimize_in_lattice(x0: Sequence[int], kernel: List[IntVector]) -> List[int]:
    basis = _size_reduce([list(v) for v in kernel if any(v)])
    x = list(x0)

    # Coarse pass: shorten x in the Euclidean norm against each basis vector
    changed = True
    while changed:
        changed = False
        for v in basis:
            q = round(sympy.Rational(_dot(x, v), _dot(v, v)))
            if q:
                candidate = [a - q * b for a, b in zip(x, v)]
                if _dot(candidate, candidate) < _dot(x, x):
                    x, changed = candidate, True

    directions = [tuple(v) for v in basis]
    for v, w in combinations(basis, 2):
        directions.append(tuple(a + b for a, b in zip(v, w)))
        directions.append(tuple(a - b for a, b in zip(v, w)))

    improved = True
    while improved:
        improved = False
        for d in directions:
            for s in (1, -1):
                candidate = [a + s * b for a, b in zip(x, d)]
                if _flattening_key(candidate) < _flattening_key(x):
                    x, improved = candidate, True
    return x


def solve_flattening(datum: NZDatum, require_longitude: bool = False) -> Flattening:
    """Deterministic flattening: minimal ||f||_1 + ||f''||_1, ties broken lexicographically."""
    x0, kernel = flattening_lattice(datum, require_longitude)
    x = _minimize_in_lattice(x0, kernel)
    n = datum.n
    flattening = Flattening.from_pair(x[:n], x[n:], datum)
    logger.debug("Flattening f=%s f''=%s (longitude compatible: %s)",
                 flattening.f, flattening.fpp, flattening.longitude_compatible)
    return flattening.validate(datum)


# ---------------------------------------------------------------------------
# Symplectic checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymplecticReport:
    n: int
    symmetric: bool
    rank: int
    det_b: int
    b_inverse_a_symmetric: Optional[bool]
    longitude_pairing: Optional[sympy.Rational] = None

    @property
    def ok(self) -> bool:
        return (self.symmetric and self.rank == self.n and self.b_inverse_a_symmetric is not False
                and self.longitude_pairing in (None, 1))

    def raise_for_violation(self):
        if not self.symmetric:
            raise SymplecticViolation("A B^T is not symmetric")
        if self.rank != self.n:
            raise SymplecticViolation(f"(A B) has rank {self.rank}, expected {self.n}")
        if self.b_inverse_a_symmetric is False:
            raise SymplecticViolation("B^-1 A is not symmetric")
        if self.longitude_pairing not in (None, 1):
            raise SymplecticViolation(f"A_N.D - B_N.C = {self.longitude_pairing}, expected 1")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "symmetric": self.symmetric,
            "rank": self.rank,
            "det_b": self.det_b,
            "b_inverse_a_symmetric": self.b_inverse_a_symmetric,
            "longitude_pairing": None if self.longitude_pairing is None else str(self.longitude_pairing),
            "ok": self.ok,
        }


def check_symplectic(datum: NZDatum) -> SymplecticReport:
    """Exact rational report on the NZ symplectic relations."""
    A = sympy.Matrix(datum.a)
    B = sympy.Matrix(datum.b)
    det_b = int(B.det())
    ba_symmetric = None
    if det_b:
        ba = B.inv() * A
        ba_symmetric = ba == ba.T
    pairing = None
    if datum.longitude is not None:
        lon = datum.longitude
        pairing = sympy.Rational(_dot(datum.a[-1], lon.two_d) - _dot(datum.b[-1], lon.two_c), 2)
    return SymplecticReport(
        n=datum.n,
        symmetric=A * B.T == B * A.T,
        rank=A.row_join(B).rank(),
        det_b=det_b,
        b_inverse_a_symmetric=ba_symmetric,
        longitude_pairing=pairing,
    )


@dataclass(frozen=True)
class QuadraticData:
    """Exact B^-1 A, B^-1 eta and f . B^-1 A f for a datum with det B != 0."""

    b_inv_a: sympy.Matrix
    b_inv_eta: sympy.Matrix
    f_b_inv_a_f: sympy.Rational


def quadratic_data(datum: NZDatum, flattening: Flattening) -> QuadraticData:
    B = sympy.Matrix(datum.b)
    if B.det() == 0:
        raise ValueError("B is singular; normalize the quad type first")
    b_inv = B.inv()
    b_inv_a = b_inv * sympy.Matrix(datum.a)
    f = sympy.Matrix(flattening.f)
    return QuadraticData(
        b_inv_a=b_inv_a,
        b_inv_eta=b_inv * sympy.Matrix(datum.eta),
        f_b_inv_a_f=sympy.Rational((f.T * b_inv_a * f)[0, 0]),
    )


# ---------------------------------------------------------------------------
# Moves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MoveCertificate:
    kind: str
    params: dict
    input_hash: str
    output_hash: str
    tau_sign: Optional[int] = None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params, "input_hash": self.input_hash,
                "output_hash": self.output_hash, "tau_sign": self.tau_sign}


@dataclass(frozen=True)
class MoveResult:
    datum: NZDatum
    shapes: Optional[ShapeVector]
    flattening: Optional[Flattening]
    certificate: MoveCertificate


def _certify(kind: str, params: dict, before: NZDatum, after: NZDatum, tau_sign: Optional[int]) -> MoveCertificate:
    after.validate()
    certificate = MoveCertificate(kind=kind, params=params, input_hash=datum_fingerprint(before),
                                  output_hash=datum_fingerprint(after), tau_sign=tau_sign)
    logger.info("Move %s %s: %s -> %s", kind, params, certificate.input_hash, certificate.output_hash)
    return certificate


def _check_index(i: int, upper: int, what: str):
    if not 1 <= i <= upper:
        raise ValueError(f"{what} must lie in 1..{upper}, got {i}")


def _with_column(matrix: IntMatrix, i: int, column: Sequence[int]) -> IntMatrix:
    return tuple(row[:i] + (column[r],) + row[i + 1:] for r, row in enumerate(matrix))


def rotate_quad(datum: NZDatum, i: int, direction: Direction = "fwd",
                shapes: Optional[ShapeVector] = None,
                flattening: Optional[Flattening] = None) -> MoveResult:
    """Cyclically relabel the quad type of tetrahedron ``i`` (1-based).

    fwd sends (a, b) to (-b, a - b) and z to z'; bwd is its inverse.
    """
    _check_index(i, datum.n, "tetrahedron")
    if direction not in ("fwd", "bwd"):
        raise ValueError(f"direction must be 'fwd' or 'bwd', got {direction!r}")
    k = i - 1
    a, b = datum.column("a", k), datum.column("b", k)

    if direction == "fwd":
        new_a = tuple(-y for y in b)
        new_b = tuple(x - y for x, y in zip(a, b))
        new_eta = tuple(e - y for e, y in zip(datum.eta, b))
    else:
        new_a = tuple(y - x for x, y in zip(a, b))
        new_b = tuple(-x for x in a)
        new_eta = tuple(e - x for e, x in zip(datum.eta, a))

    longitude = datum.longitude
    if longitude is not None:
        c, d = longitude.two_c[k], longitude.two_d[k]
        if direction == "fwd":
            c_new, d_new, eta_new = -d, c - d, longitude.two_eta_lambda - d
        else:
            c_new, d_new, eta_new = d - c, -c, longitude.two_eta_lambda - c
        longitude = Longitude(
            two_c=longitude.two_c[:k] + (c_new,) + longitude.two_c[k + 1:],
            two_d=longitude.two_d[:k] + (d_new,) + longitude.two_d[k + 1:],
            two_eta_lambda=eta_new,
        )

    result = datum.replace(a=_with_column(datum.a, k, new_a), b=_with_column(datum.b, k, new_b),
                           eta=new_eta, longitude=longitude)

    new_shapes = None
    if shapes is not None:
        z = shapes[k]
        rotated = 1 / (1 - z) if direction == "fwd" else 1 - 1 / z
        new_shapes = tuple(shapes[:k]) + (rotated,) + tuple(shapes[k + 1:])

    new_flattening, sign = None, None
    if flattening is not None:
        f, fp, fpp = flattening.triple(k)
        if direction == "fwd":
            triple, sign = (fp, fpp, f), (-1) ** (f + 1)
        else:
            triple, sign = (fpp, f, fp), (-1) ** (f + fp)
        new_flattening = _replace_triple(flattening, k, triple, result)

    certificate = _certify("rotate", {"tetrahedron": i, "direction": direction}, datum, result, sign)
    return MoveResult(result, new_shapes, new_flattening, certificate)


def _replace_triple(flattening: Flattening, k: int, triple: Tuple[int, int, int], datum: NZDatum) -> Flattening:
    f = flattening.f[:k] + (triple[0],) + flattening.f[k + 1:]
    fpp = flattening.fpp[:k] + (triple[2],) + flattening.fpp[k + 1:]
    return Flattening.from_pair(f, fpp, datum).validate(datum)


def edge_change_matrix(n: int, row: int) -> IntMatrix:
    """P_(I,N): identity except row I, which is -1 on every edge column."""
    return tuple(
        tuple((-1 if j < n - 1 else 0) for j in range(n)) if r == row - 1 else tuple(int(r == j) for j in range(n))
        for r in range(n)
    )


def change_edge(datum: NZDatum, row: int, shapes: Optional[ShapeVector] = None,
                flattening: Optional[Flattening] = None) -> MoveResult:
    """Swap the edge equation in ``row`` (1..N-1) with the dropped one."""
    _check_index(row, datum.n - 1, "edge row")
    p = edge_change_matrix(datum.n, row)
    labels = list(datum.edge_labels)
    dropped = labels[row - 1]
    labels[row - 1] = datum.dropped_edge
    result = datum.replace(
        a=mat_mul(p, datum.a), b=mat_mul(p, datum.b), eta=mat_vec(p, datum.eta),
        dropped_edge=dropped, edge_labels=tuple(labels),
    )
    if flattening is not None:
        flattening = Flattening.from_pair(flattening.f, flattening.fpp, result).validate(result)
    certificate = _certify("edge", {"row": row}, datum, result, -1)
    return MoveResult(result, shapes, flattening, certificate)


def meridian_move(datum: NZDatum, row: int, sign: int = 1, shapes: Optional[ShapeVector] = None,
                  flattening: Optional[Flattening] = None) -> MoveResult:
    """Add ``sign`` times edge row ``row`` to the meridian row."""
    _check_index(row, datum.n - 1, "edge row")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    k = row - 1

    def bump(matrix):
        last = tuple(x + sign * y for x, y in zip(matrix[-1], matrix[k]))
        return matrix[:-1] + (last,)

    eta = datum.eta[:-1] + (datum.eta[-1] + sign * datum.eta[k],)
    result = datum.replace(a=bump(datum.a), b=bump(datum.b), eta=eta)
    if flattening is not None:
        flattening = Flattening.from_pair(flattening.f, flattening.fpp, result).validate(result)
    certificate = _certify("meridian", {"row": row, "sign": sign}, datum, result, 1)
    return MoveResult(result, shapes, flattening, certificate)


def swap_flattening(datum: NZDatum, current: Flattening, new: Flattening,
                    shapes: Optional[ShapeVector] = None) -> MoveResult:
    """Change the flattening; tau changes by (-1)^(f''.f~ - f.f~'')."""
    current.validate(datum)
    new.validate(datum)
    exponent = _dot(current.fpp, new.f) - _dot(current.f, new.fpp)
    certificate = _certify("flattening", {"f": list(new.f), "fpp": list(new.fpp)}, datum, datum,
                           (-1) ** (exponent % 2))
    return MoveResult(datum, shapes, new, certificate)


# ---------------------------------------------------------------------------
# 2-3 and 3-2 moves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoThreeSite:
    """Where a 2-3 move acts.

    For "2-3", ``tetrahedra`` names (X1, X2), glued along the face being
    replaced. For "3-2", it names (W1, W2, W3) around the central edge whose
    equation sits in ``central_row``. The quad alignment is the standard one:
    X1 = W2 + W3'', X1'' = W1 + W2'', X2 = W2'' + W3, X2'' = W3'' + W1.
    """

    direction: Literal["2-3", "3-2"]
    tetrahedra: Tuple[int, ...]
    central_row: Optional[int] = None

    def to_dict(self) -> dict:
        return {"direction": self.direction, "tetrahedra": list(self.tetrahedra), "central_row": self.central_row}


def _permutation_sign(order: Sequence[int]) -> int:
    inversions = sum(1 for x, y in combinations(order, 2) if x > y)
    return -1 if inversions % 2 else 1


def _check_regular(values, ctx, what: str):
    eps = mpnum.degeneracy_epsilon(ctx)
    for label, z in values:
        if abs(z) < eps or abs(1 - z) < eps or abs(z) > 1 / eps:
            raise DegenerateMove(f"{what}: shape {label} = {ctx.nstr(z, 10)} is degenerate")


def _shape_triple(z):
    return z, 1 / (1 - z), 1 - 1 / z


def two_three_move(datum: NZDatum, site: TwoThreeSite, shapes: Optional[ShapeVector] = None,
                   flattening: Optional[Flattening] = None, ctx=None) -> MoveResult:
    """Replace two tetrahedra by three around a new edge, or the reverse."""
    ctx = ctx or mpnum.get_context()
    if site.direction == "2-3":
        return _two_to_three(datum, site, shapes, flattening, ctx)
    if site.direction == "3-2":
        return _three_to_two(datum, site, shapes, flattening, ctx)
    raise ValueError(f"unknown 2-3 direction {site.direction!r}")


def _two_to_three(datum, site, shapes, flattening, ctx) -> MoveResult:
    if len(site.tetrahedra) != 2 or len(set(site.tetrahedra)) != 2:
        raise QuadMismatch("a 2-3 move needs two distinct tetrahedra")
    for t in site.tetrahedra:
        _check_index(t, datum.n, "tetrahedron")
    i1, i2 = (t - 1 for t in site.tetrahedra)
    rest = [j for j in range(datum.n) if j not in (i1, i2)]

    def lift(a_row, b_row):
        a1, a2, b1, b2 = a_row[i1], a_row[i2], b_row[i1], b_row[i2]
        new_a = (b1 + b2, a1, a2) + tuple(a_row[j] for j in rest)
        new_b = (0, a2 + b1, a1 + b2) + tuple(b_row[j] for j in rest)
        return new_a, new_b

    central = (-1, -1, -1) + (0,) * len(rest)
    a_rows, b_rows = [central], [central]
    for a_row, b_row in zip(datum.a, datum.b):
        new_a, new_b = lift(a_row, b_row)
        a_rows.append(new_a)
        b_rows.append(new_b)

    longitude = datum.longitude
    if longitude is not None:
        two_c, two_d = lift(longitude.two_c, longitude.two_d)
        longitude = Longitude(two_c=two_c, two_d=two_d, two_eta_lambda=longitude.two_eta_lambda)

    result = NZDatum(
        n=datum.n + 1, a=tuple(a_rows), b=tuple(b_rows), eta=(-1,) + datum.eta,
        dropped_edge=datum.dropped_edge + 1, longitude=longitude,
        edge_labels=(1,) + tuple(label + 1 for label in datum.edge_labels),
    )

    new_shapes = None
    if shapes is not None:
        x1, x2 = shapes[i1], shapes[i2]
        _, x1p, x1pp = _shape_triple(x1)
        _, x2p, x2pp = _shape_triple(x2)
        w_primes = (x1 * x2, x2pp * x1p, x1pp * x2p)
        w = tuple(1 - 1 / wp for wp in w_primes)
        _check_regular(
            [(f"w{k + 1}{tag}", v) for k, wk in enumerate(w) for tag, v in zip(("", "'", "''"), _shape_triple(wk))],
            ctx, "2-3 move",
        )
        new_shapes = w + tuple(shapes[j] for j in rest)

    new_flattening, sign = None, None
    if flattening is not None:
        e1, e1p, e1pp = flattening.triple(i1)
        e2, e2p, e2pp = flattening.triple(i2)
        d1pp = 0
        d1 = e1pp - e2 + e1p
        d2, d2pp = e2p, e2 - e1p
        d3, d3pp = e1p, e1 - e2p
        f = (d1, d2, d3) + tuple(flattening.f[j] for j in rest)
        fpp = (d1pp, d2pp, d3pp) + tuple(flattening.fpp[j] for j in rest)
        new_flattening = Flattening.from_pair(f, fpp, result).validate(result)
        sign = -_permutation_sign([i1, i2] + rest) * (-1) ** ((d2pp - e1pp) % 2)

    certificate = _certify("twothree", site.to_dict(), datum, result, sign)
    return MoveResult(result, new_shapes, new_flattening, certificate)


def _three_to_two(datum, site, shapes, flattening, ctx) -> MoveResult:
    if len(site.tetrahedra) != 3 or len(set(site.tetrahedra)) != 3:
        raise QuadMismatch("a 3-2 move needs three distinct tetrahedra")
    if datum.n < 3:
        raise QuadMismatch("a 3-2 move needs at least three tetrahedra")
    for t in site.tetrahedra:
        _check_index(t, datum.n, "tetrahedron")
    if site.central_row is None:
        raise QuadMismatch("a 3-2 move needs the row of the central edge")
    _check_index(site.central_row, datum.n - 1, "central edge row")
    w1, w2, w3 = (t - 1 for t in site.tetrahedra)
    c = site.central_row - 1
    rest = [j for j in range(datum.n) if j not in (w1, w2, w3)]

    expected = {w1: -1, w2: -1, w3: -1}
    for name, matrix in (("A", datum.a), ("B", datum.b)):
        row = matrix[c]
        if any(row[j] != expected.get(j, 0) for j in range(datum.n)):
            raise QuadMismatch(
                f"row {site.central_row} of {name} is {row}, not a central edge around tetrahedra {site.tetrahedra}"
            )
    if datum.eta[c] != -1:
        raise QuadMismatch(f"central edge row has eta = {datum.eta[c]}, expected -1")

    def collapse(a_row, b_row, label):
        a1, a2 = a_row[w2], a_row[w3]
        b1, b2 = b_row[w2] - a2, b_row[w3] - a1
        if a_row[w1] != b1 + b2 or b_row[w1] != 0:
            raise QuadMismatch(f"{label} does not have the 2-3 column pattern at tetrahedra {site.tetrahedra}")
        return (a1, a2) + tuple(a_row[j] for j in rest), (b1, b2) + tuple(b_row[j] for j in rest)

    a_rows, b_rows, eta = [], [], []
    for r, (a_row, b_row) in enumerate(zip(datum.a, datum.b)):
        if r == c:
            continue
        new_a, new_b = collapse(a_row, b_row, f"row {r + 1}")
        a_rows.append(new_a)
        b_rows.append(new_b)
        eta.append(datum.eta[r])

    longitude = datum.longitude
    if longitude is not None:
        two_c, two_d = collapse(longitude.two_c, longitude.two_d, "longitude")
        longitude = Longitude(two_c=two_c, two_d=two_d, two_eta_lambda=longitude.two_eta_lambda)

    central_label = datum.edge_labels[c]

    def relabel(label):
        return label - 1 if label > central_label else label

    labels = tuple(relabel(label) for r, label in enumerate(datum.edge_labels) if r != c)
    result = NZDatum(n=datum.n - 1, a=tuple(a_rows), b=tuple(b_rows), eta=tuple(eta),
                     dropped_edge=relabel(datum.dropped_edge), longitude=longitude, edge_labels=labels)

    new_shapes = None
    if shapes is not None:
        w2p = 1 / (1 - shapes[w2])
        w3p = 1 / (1 - shapes[w3])
        if abs(w2p * w3p - 1) < mpnum.degeneracy_epsilon(ctx):
            raise DegenerateMove("3-2 move: w2' w3' = 1")
        x1 = (1 - 1 / w2p) / (1 - w3p)
        x2 = (1 - 1 / w3p) / (1 - w2p)
        _check_regular(
            [(f"x{k + 1}{tag}", v) for k, xk in enumerate((x1, x2)) for tag, v in zip(("", "'", "''"), _shape_triple(xk))],
            ctx, "3-2 move",
        )
        new_shapes = (x1, x2) + tuple(shapes[j] for j in rest)

    new_flattening, sign = None, None
    if flattening is not None:
        d1, d1p, d1pp = flattening.triple(w1)
        d2, d2p, d2pp = flattening.triple(w2)
        d3, d3p, d3pp = flattening.triple(w3)
        e1, e1p, e1pp = d2 + d3pp, d3 + d1pp, d1 + d2pp
        e2, e2p, e2pp = d2pp + d3, d1pp + d2, d3pp + d1
        if e1 + e1p + e1pp != 1 or e2 + e2p + e2pp != 1:
            raise QuadMismatch("flattening does not satisfy the central edge constraint")
        f = (e1, e2) + tuple(flattening.f[j] for j in rest)
        fpp = (e1pp, e2pp) + tuple(flattening.fpp[j] for j in rest)
        new_flattening = Flattening.from_pair(f, fpp, result).validate(result)
        sign = ((-1) ** c * _permutation_sign([w1, w2, w3] + rest)
                * -((-1) ** ((d2pp - e1pp) % 2)))

    certificate = _certify("twothree", site.to_dict(), datum, result, sign)
    return MoveResult(result, new_shapes, new_flattening, certificate)


# ---------------------------------------------------------------------------
# Quad normalization
# ---------------------------------------------------------------------------

def _b_after_rotation(datum: NZDatum, i: int, direction: Direction) -> IntMatrix:
    a, b = datum.column("a", i), datum.column("b", i)
    new_b = tuple(x - y for x, y in zip(a, b)) if direction == "fwd" else tuple(-x for x in a)
    return _with_column(datum.b, i, new_b)


def _independent_columns(matrix: IntMatrix) -> List[int]:
    chosen: List[int] = []
    cols = transpose(matrix)
    for j, col in enumerate(cols):
        candidate = sympy.Matrix([cols[k] for k in chosen + [j]])
        if candidate.rank() == len(chosen) + 1:
            chosen.append(j)
    return chosen


def normalize_quad(datum: NZDatum, shapes: Optional[ShapeVector] = None,
                   flattening: Optional[Flattening] = None) -> MoveResult:
    """Rotate quads until B is invertible.

    Tries no rotation, then every single rotation; otherwise rotates
    backwards the tetrahedra of a maximal independent set of columns of A,
    which puts -a_i into B and makes it invertible.
    """
    plan: List[Tuple[int, Direction]] = []
    if determinant(datum.b) == 0:
        single = next(
            ((i, d) for i in range(datum.n) for d in ("fwd", "bwd") if determinant(_b_after_rotation(datum, i, d))),
            None,
        )
        if single is not None:
            plan = [single]
        else:
            plan = [(i, "bwd") for i in _independent_columns(datum.a)]

    current = MoveResult(datum, shapes, flattening, None)
    sign = 1 if flattening is not None else None
    for i, direction in plan:
        current = rotate_quad(current.datum, i + 1, direction, current.shapes, current.flattening)
        if sign is not None:
            sign *= current.certificate.tau_sign

    if determinant(current.datum.b) == 0:
        raise SymplecticViolation("no quad type makes B invertible; the datum is not symplectic")
    rotations = [[i + 1, d] for i, d in plan]
    logger.info("Quad normalization applied %d rotation(s)", len(rotations))
    certificate = _certify("normalize", {"rotations": rotations}, datum, current.datum, sign)
    return MoveResult(current.datum, current.shapes, current.flattening, certificate)


# ---------------------------------------------------------------------------
# Move specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MoveSpec:
    """A move as written in a move-spec file."""

    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, payload: dict) -> "MoveSpec":
        if not isinstance(payload, dict) or "kind" not in payload:
            raise SchemaError("moves", "each move needs a 'kind'")
        params = {k: v for k, v in payload.items() if k != "kind"}
        return cls(kind=payload["kind"], params=params)

    def label(self) -> str:
        details = ", ".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.kind}({details})"


def apply_move(datum: NZDatum, spec: MoveSpec, shapes: Optional[ShapeVector] = None,
               flattening: Optional[Flattening] = None, ctx=None) -> List[MoveResult]:
    """Apply a move spec; a 2-3 round trip yields both steps."""
    p = spec.params
    if spec.kind == "rotate":
        return [rotate_quad(datum, int(p["tetrahedron"]), p.get("direction", "fwd"), shapes, flattening)]
    if spec.kind == "edge":
        return [change_edge(datum, int(p["row"]), shapes, flattening)]
    if spec.kind == "meridian":
        return [meridian_move(datum, int(p["row"]), int(p.get("sign", 1)), shapes, flattening)]
    if spec.kind == "flattening":
        if flattening is None:
            raise ValueError("a flattening swap needs the current flattening")
        new = Flattening.from_pair(p["f"], p["fpp"], datum)
        return [swap_flattening(datum, flattening, new, shapes)]
    if spec.kind == "normalize":
        return [normalize_quad(datum, shapes, flattening)]
    if spec.kind == "twothree":
        site = TwoThreeSite(direction=p.get("direction", "2-3"), tetrahedra=tuple(p["tetrahedra"]),
                            central_row=p.get("central_row"))
        first = two_three_move(datum, site, shapes, flattening, ctx)
        if not p.get("roundtrip"):
            return [first]
        if site.direction != "2-3":
            raise ValueError("round trips start with a 2-3 move")
        back = TwoThreeSite(direction="3-2", tetrahedra=(1, 2, 3), central_row=1)
        second = two_three_move(first.datum, back, first.shapes, first.flattening, ctx)
        return [first, second]
    raise ValueError(f"unknown move kind {spec.kind!r}")
