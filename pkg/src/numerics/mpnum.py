"""Arbitrary-precision contexts and the special functions the invariants need.

All numerics run inside an explicit ``mpmath.MPContext``. Contexts are cached
per precision and never mutated after creation, so they can be shared between
threads. Tolerances are always ``2^(16 - P)`` for a context of ``P`` bits.
"""
import logging
from functools import lru_cache
from typing import Iterable, Tuple, Union

import mpmath
import sympy

from src.config import DEFAULT_PRECISION, DEGENERACY_BITS, MIN_PRECISION, TOLERANCE_HEADROOM_BITS
from src.errors import BranchPoint, PoleAtOne

logger = logging.getLogger(__name__)

ComplexLike = Union[int, float, complex, str, dict, "mpmath.mpc", "mpmath.mpf"]


@lru_cache(maxsize=None)
def get_context(bits: int = DEFAULT_PRECISION) -> mpmath.MPContext:
    """Return the shared context for ``bits`` of working precision."""
    if bits < MIN_PRECISION:
        raise ValueError(f"precision must be at least {MIN_PRECISION} bits, got {bits}")
    ctx = mpmath.MPContext()
    ctx.prec = bits
    logger.debug("Created %d-bit context", bits)
    return ctx


def tolerance(ctx: mpmath.MPContext):
    """Comparison tolerance 2^(16 - P)."""
    return ctx.mpf(2) ** (TOLERANCE_HEADROOM_BITS - ctx.prec)


def degeneracy_epsilon(ctx: mpmath.MPContext):
    return ctx.mpf(2) ** (-DEGENERACY_BITS)


def digit_capacity(bits: int) -> int:
    """Decimal digits a ``bits``-precision run can report reliably."""
    return int((bits - TOLERANCE_HEADROOM_BITS) * 0.30102999566398120)


def is_close(ctx: mpmath.MPContext, a, b, tol=None) -> bool:
    tol = tolerance(ctx) if tol is None else tol
    return abs(ctx.convert(a) - ctx.convert(b)) < tol


@lru_cache(maxsize=None)
def bernoulli(n: int) -> sympy.Rational:
    """Bernoulli number B_n with the convention B_1 = +1/2."""
    if n < 0:
        raise ValueError("Bernoulli numbers are defined for n >= 0")
    if n == 1:
        return sympy.Rational(1, 2)
    return sympy.Rational(sympy.bernoulli(n))


@lru_cache(maxsize=None)
def _neg_polylog_numerator(k: int) -> Tuple[int, ...]:
    """Integer coefficients (highest degree first) of P_k with Li_{-k}(w) = P_k(w) / (1-w)^(k+1)."""
    w = sympy.Symbol("w")
    expr = w / (1 - w)
    for _ in range(k):
        expr = sympy.together(w * sympy.diff(expr, w))
    numerator = sympy.cancel(expr * (1 - w) ** (k + 1))
    return tuple(int(c) for c in sympy.Poly(numerator, w).all_coeffs())


def neg_polylog(ctx: mpmath.MPContext, m: int, w):
    """Li_m(w) for integer m <= 1.

    Li_1 is the principal -log(1 - w); for m <= 0 the polylogarithm is the
    rational function w (d/dw)^(-m) applied to w/(1 - w).
    """
    if m > 1:
        raise ValueError(f"neg_polylog needs m <= 1, got {m}")
    w = ctx.convert(w)
    one_minus = 1 - w
    if abs(one_minus) < tolerance(ctx):
        raise PoleAtOne(f"Li_{m} evaluated at w = 1")
    if m == 1:
        return -ctx.log(one_minus)
    k = -m
    return ctx.polyval(list(_neg_polylog_numerator(k)), w) / one_minus ** (k + 1)


def dilog(ctx: mpmath.MPContext, w):
    """Principal-branch Li_2(w)."""
    return ctx.polylog(2, ctx.convert(w))


def bloch_wigner(ctx: mpmath.MPContext, w):
    """Bloch-Wigner dilogarithm D(w) = Im Li_2(w) + arg(1 - w) log|w|."""
    w = ctx.convert(w)
    tol = tolerance(ctx)
    if abs(w) < tol or abs(1 - w) < tol:
        raise BranchPoint(f"Bloch-Wigner function is singular at {ctx.nstr(w, 10)}")
    return ctx.im(dilog(ctx, w)) + ctx.arg(1 - w) * ctx.log(abs(w))


def parse_complex(ctx: mpmath.MPContext, value: ComplexLike):
    """Read a complex number from a ``{re, im}`` dict, a string such as ``1.1-0.2i``, or a number."""
    if isinstance(value, dict):
        return ctx.mpc(ctx.mpf(str(value.get("re", "0"))), ctx.mpf(str(value.get("im", "0"))))
    if isinstance(value, str):
        text = value.strip().replace(" ", "").lower().replace("i", "j")
        return ctx.mpc(ctx.convert(text))
    return ctx.mpc(ctx.convert(value))


def format_real(ctx: mpmath.MPContext, x, digits: int) -> str:
    return ctx.nstr(ctx.mpf(x), digits, min_fixed=-4, max_fixed=digits)


def format_complex(ctx: mpmath.MPContext, z, digits: int) -> dict:
    """Decimal-string form used in JSON output."""
    z = ctx.mpc(z)
    return {"re": format_real(ctx, z.real, digits), "im": format_real(ctx, z.imag, digits)}


def format_vector(ctx: mpmath.MPContext, values: Iterable, digits: int) -> list:
    return [format_complex(ctx, v, digits) for v in values]
