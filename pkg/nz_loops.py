#!/usr/bin/env python3
"""CLI for the perturbative invariants of a cusped 3-manifold."""
import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from src import config
from src.data.nzio import DatumDocument, canonical_json, load_datum
from src.data.processor import ResultProcessor
from src.errors import ConfigError, NZLoopsError, PrecisionTooLow
from src.linalg.exactla import (
    Flattening,
    MoveSpec,
    apply_move,
    check_symplectic,
    normalize_quad,
    solve_flattening,
)
from src.numerics import gluesolve, mpnum
from src.perturbative.invariants import compute_invariants, invariance_harness, invariants_along_path
from src.reports.excel_generator import generate_invariant_report

COMMANDS = ["ingest", "flatten", "normalize-quad", "solve", "continue", "invariants", "check", "move", "report"]
MOVE_KINDS = ["rotate", "edge", "meridian", "flattening", "normalize", "twothree"]
LOOP_ORDERS = (2, 3, 4)


@dataclass
class RunConfig:
    """Everything one CLI invocation needs."""

    command: str
    datum: Path
    precision: int = config.DEFAULT_PRECISION
    digits: int = config.DEFAULT_DIGITS
    m: Optional[str] = None
    m_path: List[str] = field(default_factory=list)
    steps: int = 10
    loops: int = 3
    moves: Optional[Path] = None
    out: Optional[Path] = None
    dropped_edge: Optional[int] = None
    longitude: bool = False
    method: str = "log"
    move: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if self.precision < config.MIN_PRECISION:
            raise ConfigError(f"precision must be at least {config.MIN_PRECISION} bits, got {self.precision}")
        capacity = mpnum.digit_capacity(self.precision)
        if self.digits > capacity:
            raise PrecisionTooLow(
                f"{self.digits} digits requested but {self.precision} bits support only {capacity}"
            )
        if self.loops not in LOOP_ORDERS:
            raise ConfigError(f"loop order must be one of {LOOP_ORDERS}, got {self.loops}")
        if self.steps < 1:
            raise ConfigError("--steps must be positive")
        if self.command == "check" and self.moves is None:
            raise ConfigError("check needs --moves")
        if self.command == "continue" and not self.m_path and self.m is None:
            raise ConfigError("continue needs --m-path or --m")
        if self.command == "report" and self.out is None:
            raise ConfigError("report needs --out for the workbook")
        if self.command == "move" and "kind" not in self.move:
            raise ConfigError("move needs --kind")
        return self


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------

def _progress(message: str):
    print(message, file=sys.stderr)


def _load(cfg: RunConfig):
    document = load_datum(cfg.datum)
    datum = document.resolve_datum(cfg.dropped_edge)
    return document, datum


def _meridian(cfg: RunConfig):
    ctx = mpnum.get_context(cfg.precision)
    if cfg.m is None:
        return None
    m = mpnum.parse_complex(ctx, cfg.m)
    return None if mpnum.is_close(ctx, m, 1) else m


def _flattening(datum, document: DatumDocument, deformed: bool) -> Flattening:
    """The stored flattening, unless a deformed run needs a longitude-compatible one."""
    if document.flattening is not None:
        stored = Flattening.from_pair(*document.flattening, datum).validate(datum)
        if not deformed or stored.longitude_compatible:
            return stored
    return solve_flattening(datum, require_longitude=deformed)


def _solve(cfg: RunConfig, datum, document: DatumDocument, m=None):
    """Shapes at m = 1, continued along a straight path to ``m`` if given."""
    initial = list(document.shapes) if document.shapes is not None else None
    base = gluesolve.solve_shapes(datum, m=1, initial=initial, method=cfg.method, bits=cfg.precision)
    if m is None:
        return base, [base]
    path = gluesolve.linear_path(1, m, cfg.steps, cfg.precision)
    states = gluesolve.continue_in_m(datum, base, path, method=cfg.method)
    return states[-1], states


def _shape_payload(cfg: RunConfig, datum, shapes) -> dict:
    payload = shapes.to_dict(cfg.digits)
    if datum.has_longitude:
        payload["ell"] = mpnum.format_complex(shapes.ctx, gluesolve.longitude_eigenvalue(datum, shapes), cfg.digits)
    return payload


def cmd_ingest(cfg: RunConfig) -> dict:
    document, datum = _load(cfg)
    report = check_symplectic(datum)
    report.raise_for_violation()
    _progress(f"{document.name}: N={datum.n}, dropped edge {datum.dropped_edge}")
    ingested = DatumDocument(n=datum.n, tables=document.tables, datum=datum, shapes=document.shapes,
                             flattening=document.flattening, meta=document.meta)
    return ingested.to_dict()


def cmd_flatten(cfg: RunConfig) -> dict:
    _, datum = _load(cfg)
    flattening = solve_flattening(datum, require_longitude=cfg.longitude)
    return {"flattening": flattening.to_dict()}


def cmd_normalize_quad(cfg: RunConfig) -> dict:
    document, datum = _load(cfg)
    flattening = _flattening(datum, document, deformed=False)
    result = normalize_quad(datum, flattening=flattening)
    return {
        "certificate": result.certificate.to_dict(),
        "datum": DatumDocument(n=result.datum.n, datum=result.datum, meta=document.meta).to_dict(),
        "flattening": result.flattening.to_dict(),
    }


def cmd_solve(cfg: RunConfig) -> dict:
    document, datum = _load(cfg)
    shapes, _ = _solve(cfg, datum, document, _meridian(cfg))
    lift = gluesolve.certify_lift(datum, shapes)
    payload = _shape_payload(cfg, datum, shapes)
    payload["lift"] = lift.to_dict()
    return {"shapes": payload}


def cmd_continue(cfg: RunConfig) -> dict:
    document, datum = _load(cfg)
    ctx = mpnum.get_context(cfg.precision)
    base, _ = _solve(cfg, datum, document)
    path = cfg.m_path or gluesolve.linear_path(1, mpnum.parse_complex(ctx, cfg.m), cfg.steps, cfg.precision)
    states = gluesolve.continue_in_m(datum, base, path, method=cfg.method)
    _progress(f"Continued {document.name} through {len(states)} points")
    return {"path": [_shape_payload(cfg, datum, state) for state in states]}


def cmd_invariants(cfg: RunConfig) -> dict:
    document, datum = _load(cfg)
    m = _meridian(cfg)
    flattening = _flattening(datum, document, deformed=m is not None)
    shapes, _ = _solve(cfg, datum, document, m)
    invariants = compute_invariants(datum, shapes, flattening, cfg.loops)
    _progress(f"{document.name}: volume {mpnum.format_real(shapes.ctx, invariants.complex_volume.volume, 12)}")
    payload = invariants.to_dict(cfg.digits)
    payload["shapes"] = _shape_payload(cfg, datum, shapes)
    payload["flattening"] = flattening.to_dict()
    return payload


def _read_moves(path: Path) -> List[MoveSpec]:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid move spec {path}: {exc}") from None
    if not isinstance(payload, list):
        raise ConfigError("a move spec file holds a list of moves")
    return [MoveSpec.from_dict(entry) for entry in payload]


def cmd_check(cfg: RunConfig) -> dict:
    document, datum = _load(cfg)
    m = _meridian(cfg)
    flattening = _flattening(datum, document, deformed=m is not None)
    shapes, _ = _solve(cfg, datum, document, m)
    report = invariance_harness(datum, shapes, flattening, _read_moves(cfg.moves), loops=min(cfg.loops, 3))
    _progress(f"{document.name}: {sum(c.passed for c in report.checks)}/{len(report.checks)} moves passed")
    return report.to_dict()


def cmd_move(cfg: RunConfig) -> dict:
    document, datum = _load(cfg)
    flattening = _flattening(datum, document, deformed=False)
    shapes = None
    if document.shapes is not None:
        shapes = gluesolve.solve_shapes(datum, initial=list(document.shapes), method=cfg.method,
                                        bits=cfg.precision)
    spec = MoveSpec.from_dict(cfg.move)
    steps = apply_move(datum, spec, shapes.z if shapes else None, flattening, mpnum.get_context(cfg.precision))
    final = steps[-1]
    result = DatumDocument(
        n=final.datum.n,
        datum=final.datum,
        shapes=None if final.shapes is None else tuple(
            (v["re"], v["im"]) for v in mpnum.format_vector(shapes.ctx, final.shapes, cfg.digits)
        ),
        flattening=(final.flattening.f, final.flattening.fpp),
        meta=document.meta,
    )
    return {"certificates": [s.certificate.to_dict() for s in steps], "datum": result.to_dict()}


def cmd_report(cfg: RunConfig) -> dict:
    document, datum = _load(cfg)
    m = _meridian(cfg)
    flattening = _flattening(datum, document, deformed=m is not None)
    base, _ = _solve(cfg, datum, document)
    sweep_loops = min(cfg.loops, 3)
    points = [compute_invariants(datum, base, flattening, sweep_loops, closed_form=False)]
    if m is not None:
        path = gluesolve.linear_path(1, m, cfg.steps, cfg.precision)
        points += invariants_along_path(datum, base, flattening, path, sweep_loops)
    harness = None
    if cfg.moves is not None:
        harness = invariance_harness(datum, base, flattening, _read_moves(cfg.moves), loops=sweep_loops)
    path = generate_invariant_report(str(cfg.out), points, dict(document.meta), harness, title=document.name)
    _progress(f"Report saved to: {path}")
    stats = ResultProcessor(points).get_summary_stats()
    return {
        "report": path,
        "points": stats.pop("points"),
        "ranges": stats,
        "harness_passed": None if harness is None else harness.passed,
    }


HANDLERS = {
    "ingest": cmd_ingest,
    "flatten": cmd_flatten,
    "normalize-quad": cmd_normalize_quad,
    "solve": cmd_solve,
    "continue": cmd_continue,
    "invariants": cmd_invariants,
    "check": cmd_check,
    "move": cmd_move,
    "report": cmd_report,
}


def cmd_pipeline(cfg: RunConfig) -> dict:
    """Validate the config and run one subcommand, returning its JSON payload."""
    cfg.validate()
    return HANDLERS[cfg.command](cfg)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Perturbative invariants from Neumann-Zagier data")
    parser.add_argument("command", choices=COMMANDS, help="Pipeline stage to run")
    parser.add_argument("--datum", "-d", required=True, type=Path, help="nzdatum-v1 JSON file")
    parser.add_argument(
        "--precision", "-p",
        type=int,
        default=config.DEFAULT_PRECISION,
        help=f"Working precision in bits (default: {config.DEFAULT_PRECISION})"
    )
    parser.add_argument(
        "--digits",
        type=int,
        default=config.DEFAULT_DIGITS,
        help=f"Decimal digits in the output (default: {config.DEFAULT_DIGITS})"
    )
    parser.add_argument("--out", "-o", type=Path, help="Output file (JSON, or .xlsx for report)")
    parser.add_argument("--m", help="Meridian eigenvalue, e.g. 1.1 or 1.05+0.02i (default: 1)")
    parser.add_argument("--m-path", help="Comma-separated m values for continue")
    parser.add_argument("--steps", type=int, default=10, help="Continuation steps from m = 1 (default: 10)")
    parser.add_argument("--loops", "-n", type=int, default=3, help="Highest loop order (default: 3)")
    parser.add_argument("--moves", type=Path, help="Move-spec JSON file for check and report")
    parser.add_argument("--dropped-edge", type=int, help="Edge equation to omit when deriving from gluing tables")
    parser.add_argument("--longitude", action="store_true", help="flatten: require longitude compatibility")
    parser.add_argument("--method", choices=["log", "multiplicative"], default="log", help="Newton coordinates")
    parser.add_argument("--log-level", default=config.LOG_LEVEL, help="Logging level (default: WARNING)")

    moves = parser.add_argument_group("move", "Site parameters for the move subcommand")
    moves.add_argument("--kind", choices=MOVE_KINDS)
    moves.add_argument("--tetrahedron", type=int)
    moves.add_argument("--direction", help="fwd/bwd for rotate, 2-3/3-2 for twothree")
    moves.add_argument("--row", type=int)
    moves.add_argument("--sign", type=int, choices=[-1, 1])
    moves.add_argument("--tetrahedra", help="Comma-separated tetrahedra for twothree")
    moves.add_argument("--central-row", type=int)
    moves.add_argument("--roundtrip", action="store_true")
    moves.add_argument("--f", help="Comma-separated f for a flattening move")
    moves.add_argument("--fpp", help="Comma-separated f'' for a flattening move")
    return parser


def _int_list(text: Optional[str]) -> Optional[List[int]]:
    return None if text is None else [int(x) for x in text.split(",") if x.strip()]


def config_from_args(args: argparse.Namespace) -> RunConfig:
    move = {}
    if args.kind:
        move["kind"] = args.kind
        for key in ("tetrahedron", "direction", "row", "sign", "central_row"):
            value = getattr(args, key)
            if value is not None:
                move[key] = value
        for key in ("tetrahedra", "f", "fpp"):
            value = _int_list(getattr(args, key))
            if value is not None:
                move[key] = value
        if args.roundtrip:
            move["roundtrip"] = True
    return RunConfig(
        command=args.command,
        datum=args.datum,
        precision=args.precision,
        digits=args.digits,
        m=args.m,
        m_path=[x.strip() for x in args.m_path.split(",")] if args.m_path else [],
        steps=args.steps,
        loops=args.loops,
        moves=args.moves,
        out=args.out,
        dropped_edge=args.dropped_edge,
        longitude=args.longitude,
        method=args.method,
        move=move,
    )


def _emit(payload: dict, out: Optional[Path]):
    text = canonical_json(payload)
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config.configure_logging(args.log_level)
    cfg = config_from_args(args)

    try:
        payload = cmd_pipeline(cfg)
    except NZLoopsError as exc:
        _emit({"error": exc.to_dict()}, None)
        return 1
    except ValueError as exc:
        _emit({"error": ConfigError(str(exc)).to_dict()}, None)
        return 1

    _emit(payload, None if cfg.command == "report" else cfg.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
