#!/usr/bin/env python3
"""Regenerate an nzdatum-v1 fixture from SnapPy (optional dependency)."""
import argparse
import sys

from src import config
from src.data.nzio import DatumDocument, derive_nz, save_datum, tables_from_snappy
from src.errors import NZLoopsError
from src.linalg.exactla import solve_flattening


def export(name: str, output: str, bits: int = config.DEFAULT_PRECISION) -> str:
    """Triangulate ``name`` with SnapPy and write its gluing tables, NZ datum, shapes and flattening."""
    try:
        import snappy
    except ImportError:
        raise SystemExit("export_fixture needs SnapPy: pip install snappy") from None

    manifold = snappy.Manifold(name)
    if manifold.num_cusps() != 1:
        raise SystemExit(f"{name} has {manifold.num_cusps()} cusps; only one-cusped manifolds are supported")
    rows = [[int(x) for x in row] for row in manifold.gluing_equations()]
    tables = tables_from_snappy(rows)
    datum = derive_nz(tables)
    flattening = solve_flattening(datum)

    shapes = []
    for z in manifold.tetrahedra_shapes(part="rect", bits_prec=bits):
        shapes.append((f"{float(z.real()):.17g}", f"{float(z.imag()):.17g}"))

    document = DatumDocument(
        n=datum.n,
        tables=tables,
        datum=datum,
        shapes=tuple(shapes),
        flattening=(flattening.f, flattening.fpp),
        meta={"name": name, "source": f"snappy {snappy.__version__}"},
    )
    return str(save_datum(document, output))


def main():
    parser = argparse.ArgumentParser(description="Export a SnapPy triangulation as an nzdatum-v1 fixture")
    parser.add_argument("name", help="SnapPy manifold name, e.g. 4_1 or 9_12")
    parser.add_argument(
        "--output", "-o",
        help="Output file path (default: the fixture directory)"
    )
    parser.add_argument("--bits", type=int, default=config.DEFAULT_PRECISION, help="Shape precision in bits")
    args = parser.parse_args()
    config.configure_logging()

    output = args.output or str(config.fixture_path(f"{args.name}.json"))
    print(f"Exporting {args.name} from SnapPy...")
    try:
        path = export(args.name, output, bits=args.bits)
    except NZLoopsError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        sys.exit(1)
    print(f"Fixture saved to: {path}")


if __name__ == "__main__":
    main()
