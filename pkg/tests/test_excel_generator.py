import pytest
from openpyxl import load_workbook

from src.data.processor import ResultProcessor
from src.perturbative.invariants import HarnessReport, MoveCheck
from src.reports.excel_generator import InvariantReportGenerator, generate_invariant_report


def test_report_with_single_point(tmp_path, invariants_4_1):
    path = generate_invariant_report(str(tmp_path / "out" / "4_1.xlsx"), [invariants_4_1], {"name": "4_1"})
    wb = load_workbook(path)
    assert wb.sheetnames == ["Summary", "Deformation"]
    summary = wb["Summary"]
    assert summary["A1"].value == "nz-loops: invariants"
    assert summary["A3"].value == "Quantity"
    assert summary["A4"].value == "Manifold"


def test_report_with_harness(tmp_path, invariants_4_1):
    harness = HarnessReport(checks=[
        MoveCheck(index=0, label="rotate(direction=fwd, tetrahedron=1)", tau_sq_deviation=1e-40, s3_deviation=0.0),
        MoveCheck(index=1, label="rotate(tetrahedron=5)", error="ValueError: no tetrahedron 5"),
    ])
    path = generate_invariant_report(str(tmp_path / "r.xlsx"), [invariants_4_1, invariants_4_1],
                                     harness=harness, title="4_1")
    wb = load_workbook(path)
    assert wb.sheetnames == ["Summary", "Deformation", "Invariance"]
    assert wb["Invariance"]["A1"].value == "4_1: invariance checks"
    assert wb["Deformation"].max_row >= 5


def test_deformation_charts_are_added(invariants_4_1):
    generator = InvariantReportGenerator()
    generator.add_deformation_sheet(ResultProcessor([invariants_4_1, invariants_4_1]))
    ws = generator.wb["Deformation"]
    assert len(ws._charts) == len(InvariantReportGenerator.SWEEP_CHARTS)
    assert ws["A7"].value == "Sweep Ranges"
    assert ws["A8"].value == "|tau|"
    assert ws["B8"].value == pytest.approx(3 ** 0.5 / 2)


def test_empty_sweep_is_rejected(tmp_path):
    with pytest.raises(ValueError):
        generate_invariant_report(str(tmp_path / "empty.xlsx"), [])
