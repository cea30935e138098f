import json

import pytest
from openpyxl import load_workbook

import nz_loops
from src.config import fixture_path
from src.errors import ConfigError

DATUM = str(fixture_path("4_1.json"))
MOVES = str(fixture_path("moves_4_1.json"))


def _run(capsys, *argv):
    code = nz_loops.main(list(argv))
    return code, json.loads(capsys.readouterr().out)


def test_invariants_command(capsys):
    code, payload = _run(capsys, "invariants", "--datum", DATUM, "--digits", "25")
    assert code == 0
    assert float(payload["s3"]["re"]) == pytest.approx(-1 / 54, rel=1e-12)
    assert float(payload["s0"]["volume"]) == pytest.approx(2.029883212819307)
    assert float(payload["tau"]["value"]["im"]) == pytest.approx(3 ** 0.5 / 2)
    assert payload["flattening"]["f"] == [0, 1]


def test_output_is_deterministic(capsys):
    _, first = _run(capsys, "invariants", "--datum", DATUM, "--loops", "2")
    _, second = _run(capsys, "invariants", "--datum", DATUM, "--loops", "2")
    assert first == second
    assert "s3" not in first


def test_deformed_invariants_use_a_longitude_flattening(capsys):
    code, payload = _run(capsys, "invariants", "--datum", DATUM, "--m", "1.1", "--steps", "4", "--loops", "2")
    assert code == 0
    assert payload["flattening"]["longitude_compatible"] is True
    assert float(payload["m"]["re"]) == pytest.approx(1.1)


def test_precision_too_low_for_requested_digits(capsys):
    code, payload = _run(capsys, "invariants", "--datum", DATUM, "--precision", "64", "--digits", "30")
    assert code == 1
    assert payload["error"]["code"] == "cli.PrecisionTooLow"


def test_unsupported_loop_order(capsys):
    code, payload = _run(capsys, "invariants", "--datum", DATUM, "--loops", "5")
    assert code == 1
    assert payload["error"]["code"] == "cli.ConfigError"


def test_argument_errors_exit_with_usage():
    with pytest.raises(SystemExit) as info:
        nz_loops.main(["bogus", "--datum", DATUM])
    assert info.value.code == 2


def test_check_with_the_shipped_moves(capsys):
    code, payload = _run(capsys, "check", "--datum", DATUM, "--moves", MOVES)
    assert code == 0
    assert payload["passed"] is True
    assert len(payload["moves"]) == 9


def test_check_needs_moves(capsys):
    code, payload = _run(capsys, "check", "--datum", DATUM)
    assert code == 1
    assert "--moves" in payload["error"]["message"]


def test_bad_move_file(tmp_path, capsys):
    moves = tmp_path / "moves.json"
    moves.write_text('{"kind": "edge"}')
    code, payload = _run(capsys, "check", "--datum", DATUM, "--moves", str(moves))
    assert code == 1
    assert payload["error"]["code"] == "cli.ConfigError"


def test_edge_move(capsys):
    code, payload = _run(capsys, "move", "--datum", DATUM, "--kind", "edge", "--row", "1")
    assert code == 0
    assert payload["certificates"][0]["tau_sign"] == -1
    assert payload["datum"]["nz"]["a"] == [[-2, -2], [1, 1]]


def test_two_three_round_trip_move(capsys):
    code, payload = _run(capsys, "move", "--datum", DATUM, "--kind", "twothree", "--direction", "2-3",
                         "--tetrahedra", "1,2", "--roundtrip")
    assert code == 0
    assert len(payload["certificates"]) == 2
    assert payload["datum"]["nz"]["a"] == [[2, 2], [1, 1]]


def test_flatten_with_longitude(capsys):
    code, payload = _run(capsys, "flatten", "--datum", DATUM, "--longitude")
    assert code == 0
    assert payload["flattening"]["f"] == [0, 0]
    assert payload["flattening"]["fpp"] == [1, 1]


def test_ingest_round_trips_the_document(tmp_path, capsys):
    out = tmp_path / "ingested.json"
    assert nz_loops.main(["ingest", "--datum", DATUM, "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["schema"] == "nzdatum-v1"
    assert payload["nz"]["dropped_edge"] == 2


def test_ingest_with_another_dropped_edge(capsys):
    code, payload = _run(capsys, "ingest", "--datum", DATUM, "--dropped-edge", "1")
    assert code == 0
    assert payload["nz"]["edge_labels"] == [2]


def test_solve_reports_shapes_and_lift(capsys):
    code, payload = _run(capsys, "solve", "--datum", DATUM)
    assert code == 0
    assert payload["shapes"]["lift"]["standard"] is True
    assert float(payload["shapes"]["ell"]["re"]) == pytest.approx(-1)


def test_continue_along_explicit_path(capsys):
    code, payload = _run(capsys, "continue", "--datum", DATUM, "--m-path", "1.05,1.1")
    assert code == 0
    assert len(payload["path"]) == 2


def test_report_command(tmp_path, capsys):
    out = tmp_path / "report.xlsx"
    code, payload = _run(capsys, "report", "--datum", DATUM, "--out", str(out), "--loops", "2",
                         "--m", "1.05", "--steps", "2")
    assert code == 0
    assert payload["points"] == 3
    assert payload["harness_passed"] is None
    assert set(payload["ranges"]) == {"tau_abs", "volume", "cs_class"}
    assert payload["ranges"]["volume"]["min"] <= payload["ranges"]["volume"]["max"]
    assert load_workbook(out).sheetnames == ["Summary", "Deformation"]


def test_run_config_validation():
    cfg = nz_loops.RunConfig(command="report", datum=fixture_path("4_1.json"))
    with pytest.raises(ConfigError, match="--out"):
        cfg.validate()
