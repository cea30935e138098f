"""Shape solving for the (deformed) gluing equations.

The unknowns are the logarithmic shapes Z, with Z'' = log(1 - e^-Z)
substituted, so Newton works on the additive system

    A Z + B Z'' = i pi eta + 2 u e_N     (mod 2 pi i)

where u = log m is the meridian log-holonomy. The longitude log-holonomy is
v = C.Z + D.Z'' - i pi eta_lambda and the eigenvalue is ell = -e^v.
"""
import logging
import warnings
from dataclasses import dataclass, replace
from typing import List, Literal, Sequence, Tuple

from src.config import CONTINUATION_MAX_HALVINGS, DEFAULT_PRECISION, NEWTON_MAX_ITER
from src.data.nzio import NZDatum
from src.errors import (
    BranchJump,
    DegenerateShape,
    NoConvergence,
    NonLatticeResidual,
    NonStandardLift,
    SingularJacobian,
)
from src.numerics import mpnum

logger = logging.getLogger(__name__)

Method = Literal["log", "multiplicative"]

DEFAULT_GUESS = "0.5+0.8i"

# Largest change of a log-shape accepted in one continuation step
JUMP_RADIUS = 0.5

MIN_DAMPING = 2 ** -12


@dataclass(frozen=True)
class ShapeAssignment:
    """Solved shapes z_i together with the meridian log-holonomy u."""

    z: Tuple
    u: object
    bits: int = DEFAULT_PRECISION
    residual_norm: object = 0

    @property
    def ctx(self):
        return mpnum.get_context(self.bits)

    @property
    def n(self) -> int:
        return len(self.z)

    @property
    def zp(self) -> Tuple:
        return tuple(1 / (1 - z) for z in self.z)

    @property
    def zpp(self) -> Tuple:
        return tuple(1 - 1 / z for z in self.z)

    @property
    def log_z(self) -> Tuple:
        return tuple(self.ctx.log(z) for z in self.z)

    @property
    def log_zpp(self) -> Tuple:
        return tuple(self.ctx.log(z) for z in self.zpp)

    @property
    def m(self):
        return self.ctx.exp(self.u)

    @property
    def deformed(self) -> bool:
        """True away from m = 1."""
        return abs(self.m - 1) > mpnum.tolerance(self.ctx)

    def with_shapes(self, z: Sequence) -> "ShapeAssignment":
        return replace(self, z=tuple(z))

    def to_dict(self, digits: int) -> dict:
        ctx = self.ctx
        return {
            "z": mpnum.format_vector(ctx, self.z, digits),
            "u": mpnum.format_complex(ctx, self.u, digits),
            "m": mpnum.format_complex(ctx, self.m, digits),
            "residual_norm": ctx.nstr(self.residual_norm, 5),
            "precision": self.bits,
        }


@dataclass(frozen=True)
class LiftReport:
    lattice: Tuple[int, ...]
    residual_norm: object

    @property
    def standard(self) -> bool:
        return not any(self.lattice)

    def to_dict(self) -> dict:
        return {"lattice": list(self.lattice), "standard": self.standard}


def from_strings(values: Sequence, bits: int = DEFAULT_PRECISION, u=0) -> ShapeAssignment:
    """Shapes from decimal strings, (re, im) pairs or numbers."""
    ctx = mpnum.get_context(bits)
    z = []
    for value in values:
        if isinstance(value, (tuple, list)):
            value = {"re": value[0], "im": value[1]}
        z.append(mpnum.parse_complex(ctx, value))
    return ShapeAssignment(z=tuple(z), u=ctx.mpc(u), bits=bits)


def check_shapes(shapes: ShapeAssignment) -> ShapeAssignment:
    """Raise DegenerateShape if any of z, z', z'' is within eps of 0, 1 or infinity."""
    ctx = shapes.ctx
    eps = mpnum.degeneracy_epsilon(ctx)
    tol = mpnum.tolerance(ctx)
    for i, z in enumerate(shapes.z):
        if abs(z) < eps or abs(1 - z) < eps or abs(z) > 1 / eps:
            raise DegenerateShape(f"shape z_{i + 1} = {ctx.nstr(z, 10)} is degenerate")
        zp, zpp = 1 / (1 - z), 1 - 1 / z
        for label, w in (("z'", zp), ("z''", zpp)):
            if abs(w) < eps or abs(1 - w) < eps:
                raise DegenerateShape(f"shape {label}_{i + 1} = {ctx.nstr(w, 10)} is degenerate")
        if abs(z * zp * zpp + 1) > tol * (1 + abs(z)) ** 3:
            raise DegenerateShape(f"z z' z'' != -1 at tetrahedron {i + 1}")
    return shapes


def _raw_residual(ctx, datum: NZDatum, log_z, log_zpp, u) -> List:
    ipi = ctx.mpc(0, ctx.pi)
    out = []
    for r in range(datum.n):
        value = sum((a * x for a, x in zip(datum.a[r], log_z)), ctx.mpc(0))
        value += sum((b * y for b, y in zip(datum.b[r], log_zpp)), ctx.mpc(0))
        value -= ipi * datum.eta[r]
        if r == datum.n - 1:
            value -= 2 * u
        out.append(value)
    return out


def _lattice_part(ctx, values) -> Tuple[int, ...]:
    return tuple(int(ctx.nint(ctx.im(v) / (2 * ctx.pi))) for v in values)


def _reduce(ctx, values) -> List:
    lattice = _lattice_part(ctx, values)
    return [v - ctx.mpc(0, 2 * ctx.pi * k) for v, k in zip(values, lattice)]


def gluing_residual(datum: NZDatum, shapes: ShapeAssignment, reduce: bool = True) -> List:
    """A Z + B Z'' - i pi eta - 2u e_N at principal logarithms, optionally reduced mod 2 pi i."""
    ctx = shapes.ctx
    raw = _raw_residual(ctx, datum, shapes.log_z, shapes.log_zpp, shapes.u)
    return _reduce(ctx, raw) if reduce else raw


def gluing_jacobian(datum: NZDatum, shapes: ShapeAssignment, method: Method = "log"):
    """Jacobian of the reduced residual.

    In log coordinates it is A + B diag(1/(z - 1)); for multiplicative Newton
    the entries are A_ij / z_j + B_ij / (z_j (z_j - 1)).
    """
    ctx = shapes.ctx
    n = datum.n
    jac = ctx.matrix(n, n)
    for j, z in enumerate(shapes.z):
        if method == "log":
            da, db = ctx.mpc(1), 1 / (z - 1)
        elif method == "multiplicative":
            da, db = 1 / z, 1 / (z * (z - 1))
        else:
            raise ValueError(f"unknown Newton method {method!r}")
        for i in range(n):
            jac[i, j] = datum.a[i][j] * da + datum.b[i][j] * db
    return jac


def _norm(values) -> object:
    return max(abs(v) for v in values)


def _newton_direction(ctx, datum, state: ShapeAssignment, method: Method) -> List:
    """Solve J delta = residual for the Newton correction."""
    jac = gluing_jacobian(datum, state, method)
    residual = gluing_residual(datum, state)
    try:
        delta = ctx.lu_solve(jac, ctx.matrix(residual))
    except ZeroDivisionError as exc:
        raise SingularJacobian(f"singular Jacobian at {[ctx.nstr(z, 8) for z in state.z]}") from exc
    return [delta[i] for i in range(datum.n)]


def solve_shapes(datum: NZDatum, m=1, initial=None, method: Method = "log",
                 bits: int = DEFAULT_PRECISION, u=None, max_iter: int = NEWTON_MAX_ITER) -> ShapeAssignment:
    """Newton solve of the gluing equations at meridian eigenvalue m.

    ``initial`` is a ShapeAssignment or a list of shapes; the default guess
    puts every shape at 0.5 + 0.8i. Passing ``u`` fixes the branch of log m.
    """
    ctx = mpnum.get_context(bits)
    if u is None:
        m = mpnum.parse_complex(ctx, m)
        if abs(m) < mpnum.tolerance(ctx):
            raise ValueError("meridian eigenvalue m must be nonzero")
        u = ctx.log(m)
    u = ctx.mpc(u)

    if initial is None:
        initial = [DEFAULT_GUESS] * datum.n
    if isinstance(initial, ShapeAssignment):
        z = tuple(ctx.mpc(v) for v in initial.z)
    else:
        z = from_strings(initial, bits).z
    if len(z) != datum.n:
        raise ValueError(f"expected {datum.n} initial shapes, got {len(z)}")

    tol = mpnum.tolerance(ctx)
    state = ShapeAssignment(z=z, u=u, bits=bits)
    log_z = [ctx.log(v) for v in z]
    norm = _norm(gluing_residual(datum, state))

    for iteration in range(max_iter):
        if norm < tol:
            break
        delta = _newton_direction(ctx, datum, state, method)
        damping = ctx.mpf(1)
        while True:
            if method == "log":
                trial_log = [x - damping * d for x, d in zip(log_z, delta)]
                trial = state.with_shapes(ctx.exp(x) for x in trial_log)
            else:
                trial_log = None
                trial = state.with_shapes(x - damping * d for x, d in zip(state.z, delta))
            try:
                trial_norm = _norm(gluing_residual(datum, trial))
            except (ZeroDivisionError, ValueError):
                trial_norm = None
            if trial_norm is not None and (trial_norm < norm or damping <= MIN_DAMPING):
                break
            damping /= 2
            if damping < MIN_DAMPING:
                break
        if trial_norm is None:
            raise NoConvergence("Newton step left the domain of the gluing equations")
        state, norm = trial, trial_norm
        if trial_log is not None:
            log_z = trial_log
        logger.debug("Newton iteration %d: residual %s (damping %s)", iteration, ctx.nstr(norm, 5),
                     ctx.nstr(damping, 3))
    else:
        if norm >= tol:
            raise NoConvergence(f"Newton did not converge in {max_iter} iterations (residual {ctx.nstr(norm, 5)})")

    state = replace(state, residual_norm=norm)
    check_shapes(state)
    if abs(ctx.det(gluing_jacobian(datum, state))) < tol:
        raise SingularJacobian("Jacobian is singular at the solution")
    logger.info("Solved %d shapes at m = %s (residual %s)", datum.n, ctx.nstr(state.m, 10), ctx.nstr(norm, 5))
    return state


def _tangent(datum: NZDatum, state: ShapeAssignment):
    """dZ/du along the solution curve: J dZ = 2 e_N du."""
    ctx = state.ctx
    rhs = ctx.matrix(datum.n, 1)
    rhs[datum.n - 1] = 2
    try:
        sol = ctx.lu_solve(gluing_jacobian(datum, state), rhs)
    except ZeroDivisionError as exc:
        raise SingularJacobian("singular Jacobian during continuation") from exc
    return [sol[i] for i in range(datum.n)]


def _nearest_log(ctx, m, reference):
    """log m on the branch closest to ``reference``."""
    base = ctx.log(m)
    k = ctx.nint(ctx.im(reference - base) / (2 * ctx.pi))
    return base + ctx.mpc(0, 2 * ctx.pi * k)


def _advance(datum, state: ShapeAssignment, u_target, method: Method) -> ShapeAssignment:
    ctx = state.ctx
    du = u_target - state.u
    log_z = state.log_z
    guess = [ctx.exp(x + t * du) for x, t in zip(log_z, _tangent(datum, state))]
    solved = solve_shapes(datum, initial=guess, method=method, bits=state.bits, u=u_target)
    jump = max(abs(ctx.log(a / b)) for a, b in zip(solved.z, state.z))
    if jump > JUMP_RADIUS:
        raise NoConvergence(f"shapes moved by {ctx.nstr(jump, 5)} in one step")
    return solved


def continue_in_m(datum: NZDatum, start: ShapeAssignment, path: Sequence, method: Method = "log",
                  max_halvings: int = CONTINUATION_MAX_HALVINGS) -> List[ShapeAssignment]:
    """Track the solution branch from ``start`` through each m in ``path``.

    u stays continuous along the path, except that a state back at m = 1
    gets u = 0 so the complete structure keeps its standard lift. A failing
    step is halved up to ``max_halvings`` times before reporting BranchJump
    at that m.
    """
    ctx = start.ctx
    results = []
    current = start
    for m in path:
        m = mpnum.parse_complex(ctx, m)
        target = _nearest_log(ctx, m, current.u)
        step = target - current.u
        halvings = 0
        while abs(target - current.u) > 0:
            next_u = target if abs(target - current.u) <= abs(step) else current.u + step
            try:
                current = _advance(datum, current, next_u, method)
            except DegenerateShape as exc:
                raise DegenerateShape(f"{exc} (continuing towards m = {ctx.nstr(m, 10)})") from exc
            except (NoConvergence, SingularJacobian) as exc:
                halvings += 1
                if halvings > max_halvings:
                    raise BranchJump(
                        f"continuation failed near m = {ctx.nstr(ctx.exp(next_u), 10)}: {exc}", m=ctx.exp(next_u)
                    ) from exc
                step /= 2
                logger.debug("Halving continuation step to %s", ctx.nstr(abs(step), 5))
        if not current.deformed and abs(current.u) > 0:
            logger.info("Back at m = 1 with u = %s; resetting u to 0", ctx.nstr(current.u, 8))
            current = replace(current, u=ctx.mpc(0))
        results.append(current)
    logger.info("Continued through %d m values", len(results))
    return results


def linear_path(start, end, steps: int, bits: int = DEFAULT_PRECISION) -> List:
    """``steps`` equally spaced m values after ``start``, ending at ``end``."""
    ctx = mpnum.get_context(bits)
    start, end = mpnum.parse_complex(ctx, start), mpnum.parse_complex(ctx, end)
    if steps < 1:
        raise ValueError("a path needs at least one step")
    return [start + (end - start) * ctx.mpf(k) / steps for k in range(1, steps + 1)]


def certify_lift(datum: NZDatum, shapes: ShapeAssignment) -> LiftReport:
    """Lattice vector (A Z + B Z'' - 2u e_N - i pi eta) / (2 pi i) at principal logs."""
    ctx = shapes.ctx
    raw = gluing_residual(datum, shapes, reduce=False)
    lattice = _lattice_part(ctx, raw)
    norm = _norm(_reduce(ctx, raw))
    if norm > mpnum.tolerance(ctx):
        raise NonLatticeResidual(f"residual {ctx.nstr(norm, 5)} is not in 2 pi i Z^N")
    report = LiftReport(lattice=lattice, residual_norm=norm)
    if not report.standard:
        message = f"shapes do not use the standard lift; lattice vector {list(lattice)}"
        logger.warning(message)
        warnings.warn(message, NonStandardLift, stacklevel=2)
    return report


def longitude_log(datum: NZDatum, shapes: ShapeAssignment):
    """v = C.Z + D.Z'' - i pi eta_lambda at principal logs."""
    if datum.longitude is None:
        raise ValueError("datum has no longitude data")
    ctx = shapes.ctx
    lon = datum.longitude
    total = sum((c * x for c, x in zip(lon.two_c, shapes.log_z)), ctx.mpc(0))
    total += sum((d * y for d, y in zip(lon.two_d, shapes.log_zpp)), ctx.mpc(0))
    return (total - ctx.mpc(0, ctx.pi) * lon.two_eta_lambda) / 2


def longitude_eigenvalue(datum: NZDatum, shapes: ShapeAssignment):
    """ell = -e^v."""
    return -shapes.ctx.exp(longitude_log(datum, shapes))
