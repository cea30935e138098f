import random

import pytest

from src.data.nzio import derive_nz
from src.errors import DegenerateMove, NoIntegerSolution, QuadMismatch, SchemaError
from src.linalg.exactla import (
    Flattening,
    MoveSpec,
    TwoThreeSite,
    apply_move,
    change_edge,
    check_symplectic,
    determinant,
    edge_change_matrix,
    hnf,
    mat_mul,
    mat_vec,
    meridian_move,
    normalize_quad,
    quadratic_data,
    rotate_quad,
    solve_flattening,
    solve_integer_system,
    swap_flattening,
    two_three_move,
)
from src.numerics import gluesolve
from src.numerics.gluesolve import ShapeAssignment


def _random_matrix(rng, rows, cols, bound=6):
    return tuple(tuple(rng.randint(-bound, bound) for _ in range(cols)) for _ in range(rows))


@pytest.mark.parametrize("seed", range(10))
def test_hnf_is_unimodular_and_echelon(seed):
    rng = random.Random(seed)
    m = _random_matrix(rng, rng.randint(2, 5), rng.randint(2, 5))
    h, u = hnf(m)
    assert abs(determinant(u)) == 1
    assert mat_mul(u, m) == h
    last_pivot = -1
    for row in h:
        nonzero = [c for c, x in enumerate(row) if x]
        if not nonzero:
            continue
        pivot = nonzero[0]
        assert pivot > last_pivot
        assert row[pivot] > 0
        for above in h[:h.index(row)]:
            assert 0 <= above[pivot] < row[pivot]
        last_pivot = pivot


@pytest.mark.parametrize("seed", range(10))
def test_integer_system_particular_solution_and_kernel(seed):
    rng = random.Random(100 + seed)
    rows = _random_matrix(rng, 3, 5)
    x = tuple(rng.randint(-4, 4) for _ in range(5))
    x0, kernel = solve_integer_system(rows, mat_vec(rows, x))
    assert mat_vec(rows, x0) == mat_vec(rows, x)
    for k in kernel:
        assert not any(mat_vec(rows, k))


def test_integer_system_without_solution():
    with pytest.raises(NoIntegerSolution):
        solve_integer_system([[2, 4]], [1])


def test_flattening_of_the_figure_eight(datum_4_1):
    flattening = solve_flattening(datum_4_1)
    assert (flattening.f, flattening.fpp) == ((0, 1), (0, 0))
    assert flattening.fp == (1, 0)
    assert not flattening.longitude_compatible


def test_longitude_compatible_flattening(datum_4_1):
    flattening = solve_flattening(datum_4_1, require_longitude=True)
    assert (flattening.f, flattening.fpp) == ((0, 0), (1, 1))
    assert flattening.longitude_compatible


def test_flattening_violations_are_listed(datum_4_1):
    bad = Flattening.from_pair((1, 1), (0, 0), datum_4_1)
    assert bad.violations(datum_4_1)
    with pytest.raises(SchemaError):
        bad.validate(datum_4_1)


def test_symplectic_report_of_the_figure_eight(datum_4_1):
    report = check_symplectic(datum_4_1)
    assert report.ok
    assert report.det_b == -1
    assert report.b_inverse_a_symmetric
    assert report.to_dict()["longitude_pairing"] == "1"


def test_quadratic_data(datum_4_1, flattening_4_1):
    data = quadratic_data(datum_4_1, flattening_4_1)
    assert data.b_inv_a.tolist() == [[1, 1], [1, 1]]
    assert data.b_inv_eta.T.tolist() == [[1, 1]]
    assert data.f_b_inv_a_f == 1


@pytest.mark.parametrize("tetrahedron", [1, 2])
def test_rotation_has_order_three(datum_4_1, shapes_4_1, flattening_4_1, tetrahedron):
    ctx = shapes_4_1.ctx
    result = rotate_quad(datum_4_1, tetrahedron, "fwd", shapes_4_1.z, flattening_4_1)
    for _ in range(2):
        result = rotate_quad(result.datum, tetrahedron, "fwd", result.shapes, result.flattening)
    assert result.datum == datum_4_1
    assert result.flattening == flattening_4_1
    assert all(abs(a - b) < ctx.mpf(10) ** -60 for a, b in zip(result.shapes, shapes_4_1.z))


@pytest.mark.parametrize("tetrahedron", [1, 2])
def test_backward_rotation_undoes_forward(datum_4_1, flattening_4_1, tetrahedron):
    forward = rotate_quad(datum_4_1, tetrahedron, "fwd", flattening=flattening_4_1)
    back = rotate_quad(forward.datum, tetrahedron, "bwd", flattening=forward.flattening)
    assert back.datum == datum_4_1
    assert back.flattening == flattening_4_1


def test_rotated_shapes_solve_rotated_equations(datum_4_1, shapes_4_1):
    result = rotate_quad(datum_4_1, 1, "fwd", shapes_4_1.z)
    moved = shapes_4_1.with_shapes(result.shapes)
    ctx = shapes_4_1.ctx
    assert max(abs(r) for r in gluesolve.gluing_residual(result.datum, moved)) < ctx.mpf(10) ** -60


def test_rotation_rejects_bad_arguments(datum_4_1):
    with pytest.raises(ValueError):
        rotate_quad(datum_4_1, 3)
    with pytest.raises(ValueError):
        rotate_quad(datum_4_1, 1, "sideways")


def test_edge_change_matrix_shape():
    assert edge_change_matrix(3, 1) == ((-1, -1, 0), (0, 1, 0), (0, 0, 1))


def test_edge_change_agrees_with_dropping_another_edge(document_4_1, flattening_4_1):
    result = change_edge(document_4_1.datum, 1, flattening=flattening_4_1)
    expected = derive_nz(document_4_1.tables, dropped_edge=1)
    assert (result.datum.a, result.datum.b, result.datum.eta) == (expected.a, expected.b, expected.eta)
    assert result.datum.dropped_edge == 1
    assert result.datum.edge_labels == (2,)
    assert result.certificate.tau_sign == -1
    assert result.flattening.f == flattening_4_1.f


def test_meridian_move_adds_an_edge_row(datum_4_1, flattening_4_1):
    result = meridian_move(datum_4_1, 1, 1, flattening=flattening_4_1)
    assert result.datum.a[-1] == (3, 3)
    assert result.datum.b[-1] == (2, 1)
    assert result.datum.eta[-1] == 3
    assert result.certificate.tau_sign == 1


def test_flattening_swap_sign(datum_4_1, flattening_4_1, longitude_flattening_4_1):
    result = swap_flattening(datum_4_1, flattening_4_1, longitude_flattening_4_1)
    assert result.flattening == longitude_flattening_4_1
    assert result.certificate.tau_sign == -1
    assert result.certificate.input_hash == result.certificate.output_hash


def test_two_three_move_adds_a_central_edge(datum_4_1, shapes_4_1, flattening_4_1):
    ctx = shapes_4_1.ctx
    site = TwoThreeSite("2-3", (1, 2))
    result = two_three_move(datum_4_1, site, shapes_4_1.z, flattening_4_1, ctx)
    datum = result.datum
    assert datum.n == 3
    assert datum.a[0] == (-1, -1, -1) and datum.b[0] == (-1, -1, -1)
    assert datum.eta[0] == -1
    assert datum.dropped_edge == 3
    assert check_symplectic(datum).ok
    moved = ShapeAssignment(z=result.shapes, u=shapes_4_1.u, bits=shapes_4_1.bits)
    assert max(abs(r) for r in gluesolve.gluing_residual(datum, moved)) < ctx.mpf(10) ** -60


def test_two_three_round_trip_restores_the_datum(datum_4_1, shapes_4_1, flattening_4_1):
    ctx = shapes_4_1.ctx
    spec = MoveSpec("twothree", {"direction": "2-3", "tetrahedra": [1, 2], "roundtrip": True})
    first, second = apply_move(datum_4_1, spec, shapes_4_1.z, flattening_4_1, ctx)
    assert first.datum.n == 3
    assert second.datum == datum_4_1
    assert second.flattening == flattening_4_1
    assert all(abs(a - b) < ctx.mpf(10) ** -60 for a, b in zip(second.shapes, shapes_4_1.z))


def test_three_two_needs_a_central_edge(datum_4_1):
    with pytest.raises(QuadMismatch):
        two_three_move(datum_4_1, TwoThreeSite("3-2", (1, 2, 3), central_row=1))
    with pytest.raises(QuadMismatch):
        two_three_move(datum_4_1, TwoThreeSite("2-3", (1, 1)))


def test_two_three_move_rejects_degenerate_shapes(ctx, datum_4_1):
    # x1 x2 = 1 sends the new shape w1 to 0
    with pytest.raises(DegenerateMove, match="2-3 move"):
        two_three_move(datum_4_1, TwoThreeSite("2-3", (1, 2)), (ctx.mpc(2), ctx.mpc("0.5")), ctx=ctx)


def test_three_two_move_rejects_degenerate_shapes(ctx, datum_4_1):
    lifted = two_three_move(datum_4_1, TwoThreeSite("2-3", (1, 2))).datum
    shapes = (ctx.mpc("0.3", "0.4"), ctx.mpc(2), ctx.mpc(2))
    with pytest.raises(DegenerateMove, match="w2' w3' = 1"):
        two_three_move(lifted, TwoThreeSite("3-2", (1, 2, 3), central_row=1), shapes, ctx=ctx)


def test_normalize_quad_makes_b_invertible(datum_4_1, shapes_4_1, flattening_4_1):
    rotated = rotate_quad(datum_4_1, 1, "fwd", shapes_4_1.z, flattening_4_1)
    assert determinant(rotated.datum.b) == 0
    result = normalize_quad(rotated.datum, rotated.shapes, rotated.flattening)
    assert determinant(result.datum.b) != 0
    assert result.certificate.params["rotations"]
    assert result.flattening.violations(result.datum) == []


def test_normalize_quad_is_a_no_op_when_b_is_invertible(datum_4_1):
    result = normalize_quad(datum_4_1)
    assert result.datum == datum_4_1
    assert result.certificate.params == {"rotations": []}


def test_move_specs(datum_4_1):
    spec = MoveSpec.from_dict({"kind": "rotate", "tetrahedron": 2, "direction": "bwd"})
    assert spec.label() == "rotate(direction=bwd, tetrahedron=2)"
    with pytest.raises(SchemaError):
        MoveSpec.from_dict({"tetrahedron": 1})
    with pytest.raises(ValueError):
        apply_move(datum_4_1, MoveSpec("shuffle"))
