"""Truncated power series in hbar^(1/2) and N formal variables, and the Wick engine.

A series maps keys ``(two_h, alpha)`` to coefficients, where ``two_h`` is
twice the hbar exponent and ``alpha`` the exponent vector of x. Formal
Gaussian integration replaces x^alpha by its Wick contraction against the
inverse Hessian; hbar powers come only from ``two_h``.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Mapping, Optional, Tuple

import sympy

from src.config import DEFAULT_PRECISION
from src.data.nzio import NZDatum
from src.errors import HalfIntegerSurvivor, SingularHessian, SymplecticViolation
from src.linalg.exactla import Flattening, quadratic_data
from src.numerics import mpnum

logger = logging.getLogger(__name__)

Key = Tuple[int, Tuple[int, ...]]


def bounds_for_loop(n: int) -> Tuple[int, int]:
    """(max two_h, max x-degree) sufficient for S_n."""
    if n < 2:
        raise ValueError("loop order must be at least 2")
    return 2 * (n - 1), 6 * (n - 1)


def to_mp(ctx, value):
    """Exact rational to an mpf of the given context."""
    value = sympy.Rational(value)
    return ctx.mpf(int(value.p)) / int(value.q)


@dataclass(frozen=True)
class TruncatedSeries:
    nvars: int
    max_two_h: int
    max_degree: int
    coeffs: Mapping[Key, object] = field(default_factory=dict)
    bits: int = DEFAULT_PRECISION

    def __post_init__(self):
        for two_h, alpha in self.coeffs:
            if len(alpha) != self.nvars:
                raise ValueError(f"key {alpha} does not have {self.nvars} variables")
            if two_h > self.max_two_h or sum(alpha) > self.max_degree or two_h < 0:
                raise ValueError(f"key ({two_h}, {alpha}) exceeds the truncation bounds")

    @classmethod
    def constant(cls, nvars: int, max_two_h: int, max_degree: int, value=1,
                 bits: int = DEFAULT_PRECISION) -> "TruncatedSeries":
        ctx = mpnum.get_context(bits)
        return cls(nvars, max_two_h, max_degree, {(0, (0,) * nvars): ctx.mpc(value)}, bits)

    @property
    def ctx(self):
        return mpnum.get_context(self.bits)

    def __len__(self) -> int:
        return len(self.coeffs)

    def coefficient(self, two_h: int, alpha: Optional[Tuple[int, ...]] = None):
        alpha = (0,) * self.nvars if alpha is None else tuple(alpha)
        return self.coeffs.get((two_h, alpha), self.ctx.mpc(0))

    def _fits(self, two_h: int, alpha: Tuple[int, ...], max_two_h: int, max_degree: int) -> bool:
        return two_h <= max_two_h and sum(alpha) <= max_degree

    def _check_compatible(self, other: "TruncatedSeries"):
        if self.nvars != other.nvars:
            raise ValueError(f"cannot combine series in {self.nvars} and {other.nvars} variables")

    def __add__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        self._check_compatible(other)
        max_two_h = min(self.max_two_h, other.max_two_h)
        max_degree = min(self.max_degree, other.max_degree)
        out: Dict[Key, object] = {}
        for source in (self.coeffs, other.coeffs):
            for (two_h, alpha), c in source.items():
                if self._fits(two_h, alpha, max_two_h, max_degree):
                    out[(two_h, alpha)] = out.get((two_h, alpha), 0) + c
        return TruncatedSeries(self.nvars, max_two_h, max_degree, out, self.bits)

    def __mul__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        self._check_compatible(other)
        max_two_h = min(self.max_two_h, other.max_two_h)
        max_degree = min(self.max_degree, other.max_degree)
        out: Dict[Key, object] = {}
        for (h1, a1), c1 in self.coeffs.items():
            d1 = sum(a1)
            for (h2, a2), c2 in other.coeffs.items():
                if h1 + h2 > max_two_h or d1 + sum(a2) > max_degree:
                    continue
                key = (h1 + h2, tuple(x + y for x, y in zip(a1, a2)))
                out[key] = out.get(key, 0) + c1 * c2
        return TruncatedSeries(self.nvars, max_two_h, max_degree, out, self.bits)

    def scale(self, factor) -> "TruncatedSeries":
        return TruncatedSeries(self.nvars, self.max_two_h, self.max_degree,
                               {k: c * factor for k, c in self.coeffs.items()}, self.bits)

    def exp(self) -> "TruncatedSeries":
        """exp of a series whose terms all carry a positive power of hbar^(1/2)."""
        if any(two_h == 0 for two_h, _ in self.coeffs):
            raise ValueError("exp needs every term to have two_h > 0")
        result = TruncatedSeries.constant(self.nvars, self.max_two_h, self.max_degree, 1, self.bits)
        power = result
        for k in range(1, self.max_two_h + 1):
            power = (power * self).scale(self.ctx.mpf(1) / k)
            if not power.coeffs:
                break
            result = result + power
        return result

    def embed(self, nvars: int, positions: Tuple[int, ...]) -> "TruncatedSeries":
        """Relabel variable k as variable positions[k] of an nvars-variable series."""
        out = {}
        for (two_h, alpha), c in self.coeffs.items():
            new_alpha = [0] * nvars
            for k, e in zip(positions, alpha):
                new_alpha[k] = e
            out[(two_h, tuple(new_alpha))] = c
        return TruncatedSeries(nvars, self.max_two_h, self.max_degree, out, self.bits)

    def truncate(self, max_two_h: int, max_degree: int) -> "TruncatedSeries":
        out = {k: c for k, c in self.coeffs.items() if self._fits(k[0], k[1], max_two_h, max_degree)}
        return TruncatedSeries(self.nvars, max_two_h, max_degree, out, self.bits)


# ---------------------------------------------------------------------------
# Hessian and Wick contractions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Propagator:
    """Hessian H = -B^-1 A + diag(z') and its inverse."""

    h: object
    hinv: object
    bits: int

    @property
    def ctx(self):
        return mpnum.get_context(self.bits)

    @property
    def n(self) -> int:
        return self.h.rows


def hessian_from(ctx, b_inv_a: sympy.Matrix, zp, bits: int) -> Propagator:
    n = b_inv_a.rows
    h = ctx.matrix(n, n)
    for i in range(n):
        for j in range(n):
            h[i, j] = -to_mp(ctx, b_inv_a[i, j])
        h[i, i] += zp[i]
    tol = mpnum.tolerance(ctx)
    scale = 1 + max(abs(h[i, j]) for i in range(n) for j in range(n))
    if any(abs(h[i, j] - h[j, i]) > tol * scale for i in range(n) for j in range(n)):
        raise SymplecticViolation("Hessian is not symmetric; B^-1 A is not symmetric")
    if abs(ctx.det(h)) < tol * scale ** n:
        raise SingularHessian("Hessian is singular")
    # mpmath inverts at extra precision; round back to the working precision
    hinv = ctx.inverse(h)
    hinv = ctx.matrix([[+hinv[i, j] for j in range(n)] for i in range(n)])
    return Propagator(h=h, hinv=hinv, bits=bits)


def build_hessian(datum: NZDatum, shapes) -> Propagator:
    """Propagator at solved shapes; needs det B != 0."""
    b = sympy.Matrix(datum.b)
    if b.det() == 0:
        raise ValueError("B is singular; normalize the quad type first")
    return hessian_from(shapes.ctx, b.inv() * sympy.Matrix(datum.a), shapes.zp, shapes.bits)


class WickContractor:
    """Memoized Isserlis sums <x^alpha> for a fixed propagator.

    <x_i x^beta> = sum_j beta_j G_ij <x^(beta - e_j)>. The memo is a plain
    dict; concurrent writers only ever store identical values.
    """

    def __init__(self, propagator: Propagator):
        self.propagator = propagator
        self.ctx = propagator.ctx
        self._memo: Dict[Tuple[int, ...], object] = {}

    @property
    def memo_size(self) -> int:
        return len(self._memo)

    def pairing(self, alpha: Tuple[int, ...]):
        alpha = tuple(alpha)
        if sum(alpha) % 2:
            return self.ctx.mpc(0)
        if not any(alpha):
            return self.ctx.mpc(1)
        cached = self._memo.get(alpha)
        if cached is not None:
            return cached
        g = self.propagator.hinv
        i = next(k for k, e in enumerate(alpha) if e)
        beta = list(alpha)
        beta[i] -= 1
        total = self.ctx.mpc(0)
        for j, bj in enumerate(beta):
            if bj:
                rest = list(beta)
                rest[j] -= 1
                total += bj * g[i, j] * self.pairing(tuple(rest))
        self._memo[alpha] = total
        return total


@lru_cache(maxsize=None)
def count_pairings(alpha: Tuple[int, ...]) -> int:
    """Number of perfect matchings of the multiset alpha, counted with multiplicity."""
    if sum(alpha) % 2:
        return 0
    if not any(alpha):
        return 1
    i = next(k for k, e in enumerate(alpha) if e)
    beta = list(alpha)
    beta[i] -= 1
    total = 0
    for j, bj in enumerate(beta):
        if bj:
            rest = list(beta)
            rest[j] -= 1
            total += bj * count_pairings(tuple(rest))
    return total


def wick_pairing(alpha: Tuple[int, ...], propagator: Propagator):
    return WickContractor(propagator).pairing(alpha)


# ---------------------------------------------------------------------------
# Tetrahedron and integrand series
# ---------------------------------------------------------------------------

def tetra_exponent(ctx, z, max_two_h: int, max_degree: int, bits: int = DEFAULT_PRECISION) -> TruncatedSeries:
    """Single-variable exponent of the quantum dilogarithm asymptotics.

    Terms hbar^(n + k/2 - 1) (-x)^k B_n / (n! k!) Li_(2-n-k)(1/z) with
    2n + k - 2 > 0.
    """
    w = 1 / z
    coeffs = {}
    for two_h in range(1, max_two_h + 1):
        for k in range(0, min(max_degree, two_h + 2) + 1):
            if (two_h + 2 - k) % 2:
                continue
            n = (two_h + 2 - k) // 2
            bn = mpnum.bernoulli(n)
            if bn == 0:
                continue
            c = to_mp(ctx, bn * (-1) ** k / (math.factorial(n) * math.factorial(k)))
            coeffs[(two_h, (k,))] = c * mpnum.neg_polylog(ctx, 2 - n - k, w)
    return TruncatedSeries(1, max_two_h, max_degree, coeffs, bits)


def tetra_series(ctx, z, max_two_h: int, max_degree: int, bits: int = DEFAULT_PRECISION) -> TruncatedSeries:
    return tetra_exponent(ctx, z, max_two_h, max_degree, bits).exp()


def integrand_series(datum: NZDatum, shapes, flattening: Flattening,
                     max_two_h: int, max_degree: int) -> TruncatedSeries:
    """exp(-hbar^(1/2)/2 x.B^-1 eta + hbar/8 f.B^-1 A f) times the tetrahedron series."""
    ctx, bits, n = shapes.ctx, shapes.bits, datum.n
    data = quadratic_data(datum, flattening)
    prefactor = {}
    if max_two_h >= 1 and max_degree >= 1:
        for i in range(n):
            alpha = tuple(int(j == i) for j in range(n))
            prefactor[(1, alpha)] = -to_mp(ctx, data.b_inv_eta[i]) / 2
    if max_two_h >= 2:
        prefactor[(2, (0,) * n)] = to_mp(ctx, data.f_b_inv_a_f) / 8
    result = TruncatedSeries(n, max_two_h, max_degree, prefactor, bits).exp()
    for i, z in enumerate(shapes.z):
        result = result * tetra_series(ctx, z, max_two_h, max_degree, bits).embed(n, (i,))
    logger.debug("Integrand series has %d terms (two_h <= %d, degree <= %d)", len(result), max_two_h, max_degree)
    return result


def gaussian_expectation(series: TruncatedSeries, propagator: Propagator, require_integral: bool = True,
                         contractor: Optional[WickContractor] = None) -> TruncatedSeries:
    """Replace every x-monomial by its Wick contraction; returns an hbar-only series."""
    # Runs sequentially; every monomial reads and fills the same contraction memo
    ctx = propagator.ctx
    contractor = contractor or WickContractor(propagator)
    totals: Dict[int, object] = {}
    for (two_h, alpha), c in series.coeffs.items():
        totals[two_h] = totals.get(two_h, ctx.mpc(0)) + c * contractor.pairing(alpha)
    logger.debug("Wick memo holds %d contractions", contractor.memo_size)

    if require_integral:
        scale = 1 + max((abs(v) for v in totals.values()), default=0)
        tol = mpnum.tolerance(ctx) * scale
        for two_h, value in totals.items():
            if two_h % 2 and abs(value) > tol:
                raise HalfIntegerSurvivor(f"hbar^{two_h}/2 coefficient {ctx.nstr(value, 10)} does not vanish")
        totals = {h: v for h, v in totals.items() if h % 2 == 0}
    return TruncatedSeries(0, series.max_two_h, 0, {(h, ()): v for h, v in totals.items()}, series.bits)


def log_hbar_series(expectation: TruncatedSeries) -> Dict[int, object]:
    """Coefficients of hbar^k (k >= 1) in the log of an hbar-only series with constant term 1."""
    ctx = expectation.ctx
    top = expectation.max_two_h // 2
    a = [expectation.coefficient(2 * k, ()) for k in range(top + 1)]
    if abs(a[0] - 1) > mpnum.tolerance(ctx):
        raise ValueError("expectation must have constant term 1")
    b = [ctx.mpc(0)] * (top + 1)
    for k in range(1, top + 1):
        b[k] = a[k] - sum((j * b[j] * a[k - j] for j in range(1, k)), ctx.mpc(0)) / k
    return {k: b[k] for k in range(1, top + 1)}
