import math
import random

import pytest
import sympy

from src.errors import HalfIntegerSurvivor, SingularHessian
from src.linalg.exactla import quadratic_data
from src.numerics import mpnum
from src.perturbative import series
from src.perturbative.series import Propagator, TruncatedSeries, WickContractor

BITS = 256


def _random_propagator(ctx, rng, n):
    h = ctx.matrix(n, n)
    for i in range(n):
        for j in range(i, n):
            value = ctx.mpc(rng.uniform(-1, 1), rng.uniform(-1, 1))
            h[i, j] = h[j, i] = value
        h[i, i] += n + 1
    return Propagator(h=h, hinv=ctx.inverse(h), bits=BITS)


def _double_factorial(k):
    return math.prod(range(k, 0, -2)) if k > 0 else 1


def test_bounds_for_loop():
    assert series.bounds_for_loop(2) == (2, 6)
    assert series.bounds_for_loop(3) == (4, 12)
    with pytest.raises(ValueError):
        series.bounds_for_loop(1)


def test_keys_outside_the_bounds_are_rejected():
    with pytest.raises(ValueError):
        TruncatedSeries(1, 2, 2, {(3, (0,)): 1}, BITS)
    with pytest.raises(ValueError):
        TruncatedSeries(2, 2, 2, {(1, (1,)): 1}, BITS)


def test_products_truncate(ctx):
    x = TruncatedSeries(1, 2, 3, {(1, (1,)): ctx.mpc(1)}, BITS)
    cube = x * x * x
    assert not cube.coeffs
    assert (x * x).coefficient(2, (2,)) == 1


@pytest.mark.parametrize("seed", range(5))
def test_exp_is_a_homomorphism(ctx, seed):
    rng = random.Random(seed)

    def random_series():
        coeffs = {}
        for two_h in range(1, 5):
            for k in range(0, 4):
                coeffs[(two_h, (k,))] = ctx.mpc(rng.uniform(-1, 1), rng.uniform(-1, 1))
        return TruncatedSeries(1, 4, 6, coeffs, BITS)

    a, b = random_series(), random_series()
    lhs = (a + b).exp()
    rhs = a.exp() * b.exp()
    for key in set(lhs.coeffs) | set(rhs.coeffs):
        assert abs(lhs.coefficient(*key) - rhs.coefficient(*key)) < ctx.mpf(10) ** -60


def test_exp_needs_a_positive_hbar_power(ctx):
    with pytest.raises(ValueError):
        TruncatedSeries.constant(1, 2, 2, 1, BITS).exp()


def test_embed_relabels_variables(ctx):
    x = TruncatedSeries(1, 2, 2, {(1, (2,)): ctx.mpc(3)}, BITS)
    assert x.embed(3, (1,)).coefficient(1, (0, 2, 0)) == 3


@pytest.mark.parametrize("m", range(1, 7))
def test_wick_counts_are_double_factorials(m):
    assert series.count_pairings((2 * m,)) == _double_factorial(2 * m - 1)


def test_wick_counts_for_mixed_monomials():
    assert series.count_pairings((2, 2)) == 3
    assert series.count_pairings((1, 1, 1, 1)) == 3
    assert series.count_pairings((3, 1)) == 3
    assert series.count_pairings((3,)) == 0


def test_wick_pairing_with_unit_propagator_counts_pairings(ctx):
    n = 3
    ones = ctx.matrix([[1] * n for _ in range(n)])
    contractor = WickContractor(Propagator(h=ones, hinv=ones, bits=BITS))
    for alpha in [(2, 2, 0), (1, 1, 2), (4, 0, 2), (2, 2, 2)]:
        assert contractor.pairing(alpha) == series.count_pairings(alpha)
    assert contractor.memo_size > 0


def test_two_point_function_is_the_propagator(ctx):
    propagator = _random_propagator(ctx, random.Random(7), 3)
    tol = mpnum.tolerance(ctx)
    assert abs(series.wick_pairing((1, 1, 0), propagator) - propagator.hinv[0, 1]) < tol
    assert abs(series.wick_pairing((2, 0, 0), propagator) - propagator.hinv[0, 0]) < tol
    assert series.wick_pairing((1, 0, 0), propagator) == 0


def test_hessian_inverse_is_at_working_precision(ctx):
    b_inv_a = sympy.Matrix([[1, 2, 0], [2, -1, 1], [0, 1, 3]])
    zp = [ctx.mpc("0.5", "0.8"), ctx.mpc("-0.3", "1.1"), ctx.mpc("0.9", "-0.2")]
    propagator = series.hessian_from(ctx, b_inv_a, zp, BITS)
    for i in range(3):
        for j in range(3):
            assert +propagator.hinv[i, j] == propagator.hinv[i, j]
    assert series.wick_pairing((1, 1, 0), propagator) == propagator.hinv[0, 1]
    product = propagator.h * propagator.hinv
    assert all(abs(product[i, j] - (i == j)) < mpnum.tolerance(ctx) for i in range(3) for j in range(3))


@pytest.mark.parametrize("seed", range(50))
def test_gaussian_expectation_of_a_linear_source(ctx, seed):
    rng = random.Random(1000 + seed)
    n = rng.randint(1, 4)
    propagator = _random_propagator(ctx, rng, n)
    source = [ctx.mpc(rng.uniform(-1, 1), rng.uniform(-1, 1)) for _ in range(n)]
    linear = TruncatedSeries(
        n, 6, 6, {(1, tuple(int(j == i) for j in range(n))): source[i] for i in range(n)}, BITS
    )
    expectation = series.gaussian_expectation(linear.exp(), propagator)
    q = sum(source[i] * propagator.hinv[i, j] * source[j] for i in range(n) for j in range(n))
    for m in range(4):
        expected = (q / 2) ** m / math.factorial(m)
        assert abs(expectation.coefficient(2 * m, ()) - expected) < ctx.mpf(10) ** -25


def test_half_integer_survivors_are_reported(ctx):
    propagator = _random_propagator(ctx, random.Random(3), 2)
    odd = TruncatedSeries(2, 2, 2, {(0, (0, 0)): ctx.mpc(1), (1, (0, 0)): ctx.mpc("0.5")}, BITS)
    with pytest.raises(HalfIntegerSurvivor):
        series.gaussian_expectation(odd, propagator)


def test_log_of_an_exponential(ctx):
    c = ctx.mpc("0.25", "-1.5")
    expectation = TruncatedSeries(0, 6, 0, {(2, ()): c}, BITS).exp()
    logs = series.log_hbar_series(expectation)
    assert abs(logs[1] - c) < ctx.mpf(10) ** -70
    assert abs(logs[2]) < ctx.mpf(10) ** -70
    assert abs(logs[3]) < ctx.mpf(10) ** -70


def test_tetrahedron_vertices(ctx):
    z = ctx.mpc("0.3", "0.9")
    zp = 1 / (1 - z)
    exponent = series.tetra_exponent(ctx, z, 2, 4, BITS)
    tol = ctx.mpf(10) ** -70
    assert abs(exponent.coefficient(1, (1,)) - zp / 2) < tol
    assert abs(exponent.coefficient(2, (0,)) + zp / 12) < tol
    assert abs(exponent.coefficient(2, (2,)) - z * zp ** 2 / 4) < tol
    assert abs(exponent.coefficient(1, (3,)) + z * zp ** 2 / 6) < tol
    assert abs(exponent.coefficient(2, (4,)) + z * (1 + z) * zp ** 3 / 24) < tol
    assert exponent.coefficient(0, (2,)) == 0


def test_hessian_of_the_figure_eight(ctx, datum_4_1, shapes_4_1):
    propagator = series.build_hessian(datum_4_1, shapes_4_1)
    zp = shapes_4_1.zp
    assert abs(propagator.h[0, 0] - (zp[0] - 1)) < ctx.mpf(10) ** -70
    assert abs(propagator.h[0, 1] + 1) < ctx.mpf(10) ** -70
    assert propagator.n == 2


def test_singular_hessian(ctx, datum_4_1, flattening_4_1):
    data = quadratic_data(datum_4_1, flattening_4_1)
    zp = [ctx.mpc(2), ctx.mpc(2)]
    with pytest.raises(SingularHessian):
        series.hessian_from(ctx, data.b_inv_a, zp, BITS)


def test_integrand_expectation_has_only_integer_hbar_powers(ctx, datum_4_1, shapes_4_1, flattening_4_1):
    max_two_h, max_degree = series.bounds_for_loop(3)
    integrand = series.integrand_series(datum_4_1, shapes_4_1, flattening_4_1, max_two_h, max_degree)
    propagator = series.build_hessian(datum_4_1, shapes_4_1)
    raw = series.gaussian_expectation(integrand, propagator, require_integral=False)
    for two_h in range(1, max_two_h + 1, 2):
        assert abs(raw.coefficient(two_h, ())) < ctx.mpf(10) ** -25
    assert abs(raw.coefficient(0, ()) - 1) < mpnum.tolerance(ctx)
