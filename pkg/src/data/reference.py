"""Published reference values used to check computed invariants.

4_1: closed forms along the geometric component of the character variety.
9_12: the invariant trace field generator and the polynomial expressions of
tau, S2 tau^3 and S3 tau^6 in it, so the decimals can be regenerated at any
precision.
"""
from typing import Tuple

from src.numerics import mpnum

# ---------------------------------------------------------------------------
# 4_1
# ---------------------------------------------------------------------------

FIGURE_EIGHT_VOLUME = "2.02988321281930725004"


def apoly_coefficient_4_1(m):
    """p(m) = 1 - m^2 - 2m^4 - m^6 + m^8."""
    return 1 - m ** 2 - 2 * m ** 4 - m ** 6 + m ** 8


def apoly_4_1(m, ell):
    """Geometric A-polynomial m^4 - p(m) ell + m^4 ell^2."""
    return m ** 4 - apoly_coefficient_4_1(m) * ell + m ** 4 * ell ** 2


def ell_roots_4_1(ctx, m) -> Tuple:
    """Both roots ell of the geometric A-polynomial at m."""
    p = apoly_coefficient_4_1(m)
    disc = ctx.sqrt(p ** 2 - 4 * m ** 8)
    return (p + disc) / (2 * m ** 4), (p - disc) / (2 * m ** 4)


def shapes_4_1(m, ell) -> Tuple:
    """(z, w) = (-(m^2 - m^-2) / (1 + m^2 ell), (m^2 + ell) / (m^2 - m^-2))."""
    s = m ** 2 - m ** -2
    return -s / (1 + m ** 2 * ell), (m ** 2 + ell) / s


def tau_4_1(m, ell):
    """Deformed torsion, up to sign; valid for m^4 != 1."""
    return (apoly_coefficient_4_1(m) - 2 * m ** 4 * ell) / (2 * m ** 4 * (m ** 2 - m ** -2))


def _laurent_4_1(m, middle: int):
    return m ** -6 - m ** -4 - 2 * m ** -2 + middle - 2 * m ** 2 - m ** 4 + m ** 6


def s2_tilde_4_1(m):
    """(S2 + 1/8) tau^3 for one choice of the sign of tau."""
    return -_laurent_4_1(m, 15) / 192


def s3_tilde_4_1(m):
    """S3 tau^6."""
    return _laurent_4_1(m, 5) / 128


def tau_4_1_complete(ctx):
    """sqrt(-3)/2 at the complete structure."""
    return ctx.mpc(0, ctx.sqrt(3) / 2)


# ---------------------------------------------------------------------------
# 9_12
# ---------------------------------------------------------------------------

TRACE_FIELD_9_12 = (
    1, -8, 32, -89, 195, -353, 542, -719, 834, -851, 764, -605, 421, -253, 130, -55, 18, -3,
)
TRACE_FIELD_ROOT_9_12 = ("-0.06265158", "1.24990458")

# Coefficients of x^0 .. x^16 and the overall denominator
TAU_9_12 = (
    (15, -7, -15, 55, -67, 81, -43, -112, 303, -488, 606, -595, 464, -289, 143, -49, 8), 2,
)
S2_TAU3_9_12 = (
    (36263, -194718, 503316, -971739, 1582041, -2152164, 2372779, -2109742, 1426659, -484152,
     -374803, 836963, -859483, 621288, -326550, 109607, -16840), 2 ** 6 * 3,
)
S3_TAU6_9_12 = (
    (2320213, -19092785, 72589953, -186402605, 382362100, -661985976, 982969902, -1258919324,
     1402544816, -1359436057, 1134208276, -803313515, 473961630, -225394732, 80872920, -19104127,
     2161102), 2 ** 7,
)

VOLUME_9_12 = "8.836642343"
TAU_DECIMAL_9_12 = ("-3.133657804174628986", "14.061239582208047255")
S2_TAU3_DECIMAL_9_12 = ("398.62270435384630954", "948.91209325049603870")
S3_TAU6_DECIMAL_9_12 = ("71793.64335382669630", "204530.00105728258992")


def trace_field_root_9_12(ctx):
    """The generator x of the invariant trace field, polished by Newton."""
    guess = ctx.mpc(*(ctx.mpf(v) for v in TRACE_FIELD_ROOT_9_12))
    return ctx.findroot(lambda x: ctx.polyval(list(TRACE_FIELD_9_12), x), guess)


def _evaluate(ctx, expression, x):
    coefficients, denominator = expression
    return ctx.polyval(list(reversed(coefficients)), x) / denominator


def reference_9_12(ctx) -> dict:
    """tau, S2 tau^3 and S3 tau^6 of 9_12 evaluated in the context's precision."""
    x = trace_field_root_9_12(ctx)
    return {
        "tau": _evaluate(ctx, TAU_9_12, x),
        "s2_tau3": _evaluate(ctx, S2_TAU3_9_12, x),
        "s3_tau6": _evaluate(ctx, S3_TAU6_9_12, x),
    }


def decimal_9_12(ctx, name: str):
    pair = {"tau": TAU_DECIMAL_9_12, "s2_tau3": S2_TAU3_DECIMAL_9_12, "s3_tau6": S3_TAU6_DECIMAL_9_12}[name]
    return mpnum.parse_complex(ctx, {"re": pair[0], "im": pair[1]})
