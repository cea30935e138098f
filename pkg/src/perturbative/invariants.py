"""Perturbative invariants of an NZ datum at solved shapes.

S0 is the complex volume, tau the 1-loop torsion (defined up to sign) and
S_n (n >= 2) the n-loop invariants read off the log of the formal Gaussian
expectation of the integrand series. The invariance harness recomputes
tau, S2 and S3 after each move and compares them with the input.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import sympy

from src.config import DEFAULT_DIGITS, HARNESS_WORKERS, LOOP_TOLERANCE, TAU_TOLERANCE
from src.data.nzio import NZDatum
from src.errors import NZLoopsError, ZeroTorsion
from src.linalg.exactla import Flattening, MoveSpec, apply_move, normalize_quad, quadratic_data
from src.numerics import gluesolve, mpnum
from src.numerics.gluesolve import LiftReport, ShapeAssignment
from src.perturbative import series

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Torsion
# ---------------------------------------------------------------------------

def canonicalize_sign(ctx, tau):
    """Representative of +-tau with argument in [0, pi)."""
    if ctx.im(tau) < 0 or (ctx.im(tau) == 0 and ctx.re(tau) < 0):
        return -tau
    return tau


def one_loop_tau(datum: NZDatum, shapes: ShapeAssignment, flattening: Flattening, canonical: bool = True):
    """1/2 det(A diag(z'') + B diag(z)^-1) z^f'' z''^-f."""
    ctx = shapes.ctx
    n = datum.n
    zpp = shapes.zpp
    matrix = ctx.matrix(n, n)
    for i in range(n):
        for j in range(n):
            matrix[i, j] = datum.a[i][j] * zpp[j] + datum.b[i][j] / shapes.z[j]
    monomial = ctx.mpc(1)
    for z, w, f, fpp in zip(shapes.z, zpp, flattening.f, flattening.fpp):
        monomial *= z ** fpp * w ** (-f)
    tau = ctx.det(matrix) * monomial / 2
    if abs(tau) < mpnum.tolerance(ctx):
        raise ZeroTorsion("1-loop invariant vanishes")
    return canonicalize_sign(ctx, tau) if canonical else tau


# ---------------------------------------------------------------------------
# Complex volume
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComplexVolume:
    s0: object
    lift: LiftReport
    bits: int

    @property
    def ctx(self):
        return mpnum.get_context(self.bits)

    @property
    def volume(self):
        return -self.ctx.im(self.s0)

    @property
    def cs_class(self):
        """Re S0 reduced to [0, pi^2/6)."""
        ctx = self.ctx
        period = ctx.pi ** 2 / 6
        re = ctx.re(self.s0)
        return re - ctx.floor(re / period) * period

    @property
    def standard_lift(self) -> bool:
        return self.lift.standard

    def to_dict(self, digits: int) -> dict:
        ctx = self.ctx
        return {
            "value": mpnum.format_complex(ctx, self.s0, digits),
            "im": mpnum.format_real(ctx, ctx.im(self.s0), digits),
            "re_mod_class": mpnum.format_real(ctx, self.cs_class, digits),
            "volume": mpnum.format_real(ctx, self.volume, digits),
            "convention": "volume = -Im S0 = sum D(z_i)",
            "lift": self.lift.to_dict(),
        }


def complex_volume(datum: NZDatum, shapes: ShapeAssignment, flattening: Flattening) -> ComplexVolume:
    """-1/2 (Z - i pi f).(Z'' + i pi f'') + sum Li2(e^-Z), plus u v when deformed."""
    ctx = shapes.ctx
    lift = gluesolve.certify_lift(datum, shapes)
    ipi = ctx.mpc(0, ctx.pi)
    quadratic = sum(
        ((x - ipi * f) * (y + ipi * fpp)
         for x, y, f, fpp in zip(shapes.log_z, shapes.log_zpp, flattening.f, flattening.fpp)),
        ctx.mpc(0),
    )
    s0 = -quadratic / 2 + sum((mpnum.dilog(ctx, 1 / z) for z in shapes.z), ctx.mpc(0))
    if shapes.deformed:
        s0 += shapes.u * gluesolve.longitude_log(datum, shapes)
    return ComplexVolume(s0=s0, lift=lift, bits=shapes.bits)


def bloch_wigner_volume(shapes: ShapeAssignment):
    """Sum of D(z_i)."""
    ctx = shapes.ctx
    return sum((mpnum.bloch_wigner(ctx, z) for z in shapes.z), ctx.mpf(0))


# ---------------------------------------------------------------------------
# Loop invariants
# ---------------------------------------------------------------------------

def normalized_inputs(datum: NZDatum, shapes: ShapeAssignment,
                      flattening: Flattening) -> Tuple[NZDatum, ShapeAssignment, Flattening]:
    """Rotate quads if needed so that B is invertible."""
    if sympy.Matrix(datum.b).det() != 0:
        return datum, shapes, flattening
    result = normalize_quad(datum, shapes.z, flattening)
    return result.datum, shapes.with_shapes(result.shapes), result.flattening


def two_loop_closed_form(datum: NZDatum, shapes: ShapeAssignment, flattening: Flattening,
                         propagator: Optional[series.Propagator] = None):
    """The six two-loop diagrams plus the vacuum term, with propagator H^-1."""
    datum, shapes, flattening = normalized_inputs(datum, shapes, flattening)
    ctx = shapes.ctx
    n = datum.n
    data = quadratic_data(datum, flattening)
    propagator = propagator or series.hessian_from(ctx, data.b_inv_a, shapes.zp, shapes.bits)
    g = propagator.hinv

    z, zp = shapes.z, shapes.zp
    gamma1 = [(zp[i] - series.to_mp(ctx, data.b_inv_eta[i])) / 2 for i in range(n)]
    gamma2 = [z[i] * zp[i] ** 2 / 2 for i in range(n)]
    gamma3 = [-z[i] * zp[i] ** 2 for i in range(n)]
    gamma4 = [-z[i] * (1 + z[i]) * zp[i] ** 3 for i in range(n)]
    gamma0 = series.to_mp(ctx, data.f_b_inv_a_f) / 8 - sum(zp, ctx.mpc(0)) / 12

    total = ctx.mpc(0)
    for i in range(n):
        total += gamma4[i] * g[i, i] ** 2 / 8 + gamma2[i] * g[i, i] / 2
        for j in range(n):
            total += g[i, i] * gamma3[i] * g[i, j] * gamma3[j] * g[j, j] / 8
            total += gamma3[i] * g[i, j] ** 3 * gamma3[j] / 12
            total += gamma1[i] * g[i, j] * gamma3[j] * g[j, j] / 2
            total += gamma1[i] * g[i, j] * gamma1[j] / 2
    return total + gamma0


def loop_expansion(datum: NZDatum, shapes: ShapeAssignment, flattening: Flattening, max_loop: int,
                   max_degree: Optional[int] = None) -> Dict[int, object]:
    """S_2 .. S_max_loop from a single Gaussian expectation."""
    datum, shapes, flattening = normalized_inputs(datum, shapes, flattening)
    max_two_h, default_degree = series.bounds_for_loop(max_loop)
    degree = default_degree if max_degree is None else max_degree
    propagator = series.build_hessian(datum, shapes)
    integrand = series.integrand_series(datum, shapes, flattening, max_two_h, degree)
    expectation = series.gaussian_expectation(integrand, propagator)
    logs = series.log_hbar_series(expectation)
    return {k + 1: value for k, value in logs.items()}


def n_loop(datum: NZDatum, shapes: ShapeAssignment, flattening: Flattening, n: int):
    return loop_expansion(datum, shapes, flattening, n)[n]


@dataclass(frozen=True)
class LoopInvariants:
    """S0, tau and S_n at one point of the character variety."""

    complex_volume: ComplexVolume
    tau: object
    tau_raw: object
    loops: Mapping[int, object]
    m: object
    bits: int
    s2_closed_form: Optional[object] = None

    @property
    def ctx(self):
        return mpnum.get_context(self.bits)

    @property
    def s0(self):
        return self.complex_volume.s0

    @property
    def s2(self):
        return self.loops[2]

    @property
    def s2_shifted(self):
        """S2 + 1/8, the representative used by the published 4_1 formulas."""
        return self.s2 + self.ctx.mpf(1) / 8

    def sn(self, n: int):
        return self.loops[n]

    def loop_normalized(self, n: int, sign: int = 1):
        """S_n (sign tau)^(3n - 3)."""
        return self.loops[n] * (sign * self.tau) ** (3 * n - 3)

    def sn_tilde(self, sign: int = 1) -> Dict[int, object]:
        """tau^(3n) times the hbar^n coefficient of exp(sum S_k hbar^(k-1))."""
        ctx = self.ctx
        top = max(self.loops) - 1
        b = [ctx.mpc(0)] + [self.loops[k + 1] for k in range(1, top + 1)]
        a = [ctx.mpc(1)] + [ctx.mpc(0)] * top
        for k in range(1, top + 1):
            a[k] = sum((j * b[j] * a[k - j] for j in range(1, k + 1)), ctx.mpc(0)) / k
        tau = sign * self.tau
        return {n: tau ** (3 * n) * a[n] for n in range(1, top + 1)}

    def to_dict(self, digits: int = DEFAULT_DIGITS) -> dict:
        ctx = self.ctx

        def fmt(value):
            return mpnum.format_complex(ctx, value, digits)

        payload = {
            "precision": self.bits,
            "m": fmt(self.m),
            "s0": self.complex_volume.to_dict(digits),
            "tau": {"value": fmt(self.tau), "sign_tag": "+-", "raw": fmt(self.tau_raw)},
            "s2": {"value": fmt(self.s2), "shifted": fmt(self.s2_shifted), "ambiguity": "1/24"},
        }
        if self.s2_closed_form is not None:
            payload["s2"]["closed_form"] = fmt(self.s2_closed_form)
        for n in sorted(self.loops):
            if n >= 3:
                payload[f"s{n}"] = fmt(self.loops[n])
        payload["loop_normalized"] = {
            str(n): {"plus": fmt(self.loop_normalized(n, 1)), "minus": fmt(self.loop_normalized(n, -1))}
            for n in sorted(self.loops)
        }
        plus, minus = self.sn_tilde(1), self.sn_tilde(-1)
        payload["sn_tilde"] = {str(n): {"plus": fmt(plus[n]), "minus": fmt(minus[n])} for n in sorted(plus)}
        return payload


def compute_invariants(datum: NZDatum, shapes: ShapeAssignment, flattening: Flattening,
                       loops: int = 3, closed_form: bool = True) -> LoopInvariants:
    """Everything at once; deformed points need a longitude-compatible flattening."""
    ctx = shapes.ctx
    flattening.validate(datum)
    if shapes.deformed and not flattening.longitude_compatible:
        raise ValueError("deformed invariants need a longitude-compatible flattening")
    gluesolve.check_shapes(shapes)

    volume = complex_volume(datum, shapes, flattening)
    tau_raw = one_loop_tau(datum, shapes, flattening, canonical=False)
    expansion = loop_expansion(datum, shapes, flattening, loops)
    s2_closed = two_loop_closed_form(datum, shapes, flattening) if closed_form else None
    result = LoopInvariants(
        complex_volume=volume,
        tau=canonicalize_sign(ctx, tau_raw),
        tau_raw=tau_raw,
        loops=expansion,
        m=shapes.m,
        bits=shapes.bits,
        s2_closed_form=s2_closed,
    )
    logger.info("Invariants at m = %s: tau = %s", ctx.nstr(shapes.m, 8), ctx.nstr(result.tau, 12))
    return result


def invariants_along_path(datum: NZDatum, start: ShapeAssignment, flattening: Flattening, path: Sequence,
                          loops: int = 3) -> List[LoopInvariants]:
    """Continue the shapes along ``path`` and compute invariants at every point."""
    states = gluesolve.continue_in_m(datum, start, path)
    return [compute_invariants(datum, state, flattening, loops, closed_form=False) for state in states]


# ---------------------------------------------------------------------------
# Invariance harness
# ---------------------------------------------------------------------------

@dataclass
class MoveCheck:
    index: int
    label: str
    tau_sq_deviation: Optional[float] = None
    s3_deviation: Optional[float] = None
    s2_class_deviation: Optional[float] = None
    predicted_sign: Optional[int] = None
    observed_sign: Optional[int] = None
    error: Optional[str] = None
    tau_tolerance: float = TAU_TOLERANCE
    loop_tolerance: float = LOOP_TOLERANCE

    @property
    def tau_ok(self) -> bool:
        return self.tau_sq_deviation is not None and self.tau_sq_deviation < self.tau_tolerance

    @property
    def s3_ok(self) -> bool:
        return self.s3_deviation is None or self.s3_deviation < self.loop_tolerance

    @property
    def s2_ok(self) -> bool:
        return self.s2_class_deviation is None or self.s2_class_deviation < self.loop_tolerance

    @property
    def sign_matches(self) -> Optional[bool]:
        if self.predicted_sign is None or self.observed_sign is None:
            return None
        return self.predicted_sign == self.observed_sign

    @property
    def passed(self) -> bool:
        return self.error is None and self.tau_ok and self.s3_ok and self.s2_ok

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "move": self.label,
            "passed": self.passed,
            "tau_sq_deviation": self.tau_sq_deviation,
            "s3_deviation": self.s3_deviation,
            "s2_class_deviation": self.s2_class_deviation,
            "predicted_sign": self.predicted_sign,
            "observed_sign": self.observed_sign,
            "sign_matches": self.sign_matches,
            "error": self.error,
        }


@dataclass
class HarnessReport:
    checks: List[MoveCheck] = field(default_factory=list)
    baseline: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "baseline": self.baseline, "moves": [c.to_dict() for c in self.checks]}


def _relative(ctx, a, b) -> float:
    return float(abs(a - b) / (1 + abs(b)))


def _s2_class_deviation(ctx, before, after) -> float:
    """Distance of S2(after) - S2(before) from (1/24)Z."""
    delta = after - before
    scaled = 24 * ctx.re(delta)
    return float(max(abs(scaled - ctx.nint(scaled)) / 24, abs(ctx.im(delta))) / (1 + abs(before)))


def _measure(datum, shapes, flattening, loops: int):
    tau = one_loop_tau(datum, shapes, flattening, canonical=False)
    expansion = loop_expansion(datum, shapes, flattening, loops) if loops >= 2 else {}
    return tau, expansion


def _check_move(index: int, spec: MoveSpec, datum: NZDatum, shapes: ShapeAssignment, flattening: Flattening,
                baseline: Tuple, loops: int, tau_tol: float, loop_tol: float) -> MoveCheck:
    ctx = shapes.ctx
    check = MoveCheck(index=index, label=spec.label(), tau_tolerance=tau_tol, loop_tolerance=loop_tol)
    try:
        steps = apply_move(datum, spec, shapes.z, flattening, ctx)
        final = steps[-1]
        signs = [s.certificate.tau_sign for s in steps]
        check.predicted_sign = None if None in signs else int(sympy.prod(signs))
        moved = shapes.with_shapes(final.shapes)
        tau, expansion = _measure(final.datum, moved, final.flattening, loops)
    except (NZLoopsError, ValueError) as exc:
        code = exc.code if isinstance(exc, NZLoopsError) else "ValueError"
        check.error = f"{code}: {exc}"
        logger.warning("Move %d (%s) failed: %s", index, check.label, check.error)
        return check

    tau0, expansion0 = baseline
    check.tau_sq_deviation = _relative(ctx, tau ** 2, tau0 ** 2)
    ratio = tau / tau0
    check.observed_sign = 1 if ctx.re(ratio) > 0 else -1
    if 3 in expansion:
        check.s3_deviation = _relative(ctx, expansion[3], expansion0[3])
    if 2 in expansion:
        check.s2_class_deviation = _s2_class_deviation(ctx, expansion0[2], expansion[2])
    return check


def invariance_harness(datum: NZDatum, shapes: ShapeAssignment, flattening: Flattening,
                       moves: Sequence[MoveSpec], loops: int = 3, workers: int = HARNESS_WORKERS,
                       tau_tol: float = TAU_TOLERANCE, loop_tol: float = LOOP_TOLERANCE) -> HarnessReport:
    """Apply each move to the input and compare tau^2, S2 (mod 1/24) and S3.

    Moves run concurrently; failures are recorded per move, never raised.
    """
    ctx = shapes.ctx
    baseline = _measure(datum, shapes, flattening, loops)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = [
            pool.submit(_check_move, index, spec, datum, shapes, flattening, baseline, loops, tau_tol, loop_tol)
            for index, spec in enumerate(moves)
        ]
        checks = sorted((f.result() for f in futures), key=lambda c: c.index)

    tau0, expansion0 = baseline
    summary = {"tau_raw": mpnum.format_complex(ctx, tau0, DEFAULT_DIGITS)}
    summary.update({f"s{n}": mpnum.format_complex(ctx, v, DEFAULT_DIGITS) for n, v in sorted(expansion0.items())})
    report = HarnessReport(checks=checks, baseline=summary)
    logger.info("Harness: %d/%d moves passed", sum(c.passed for c in checks), len(checks))
    return report
