import pytest

from src.data.processor import ResultProcessor, get_friendly_name, harness_frame, summary_frame
from src.numerics import gluesolve
from src.perturbative.invariants import HarnessReport, MoveCheck, invariants_along_path


@pytest.fixture(scope="module")
def sweep(invariants_4_1, datum_4_1, shapes_4_1, longitude_flattening_4_1):
    path = gluesolve.linear_path(1, "1.1", 2)
    return [invariants_4_1] + invariants_along_path(datum_4_1, shapes_4_1, longitude_flattening_4_1, path)


def test_one_row_per_point(sweep):
    df = ResultProcessor(sweep).df
    assert list(df["step"]) == [0, 1, 2]
    assert df["m_re"].iloc[0] == 1.0
    assert df["m_re"].iloc[-1] == pytest.approx(1.1)
    assert {"s2_re", "s3_im", "volume", "standard_lift"} <= set(df.columns)


def test_calculated_columns(sweep):
    df = ResultProcessor(sweep).df
    assert set(ResultProcessor.CALCULATED_COLUMNS) <= set(df.columns)
    assert df["tau_abs"].iloc[0] == pytest.approx(3 ** 0.5 / 2)
    assert df["s3_tau6_re"].iloc[0] == pytest.approx(1 / 128)
    assert df["s3_tau6_im"].iloc[0] == pytest.approx(0, abs=1e-15)


def test_summary_stats(sweep):
    stats = ResultProcessor(sweep).get_summary_stats()
    assert stats["points"] == 3
    assert stats["volume"]["min"] <= stats["volume"]["max"]
    assert stats["tau_abs"]["max"] > 0
    assert set(stats) == {"points", *ResultProcessor.RANGE_COLUMNS}
    assert ResultProcessor([]).get_summary_stats() == {"points": 0}


def test_summary_frame(invariants_4_1):
    df = summary_frame(invariants_4_1, {"name": "4_1"}, digits=12)
    table = dict(zip(df["Quantity"], df["Value"]))
    assert table["Manifold"] == "4_1"
    assert table["Precision (bits)"] == "256"
    assert table["Volume (-Im S0)"].startswith("2.02988321")
    assert "S3" in table


def test_harness_frame():
    report = HarnessReport(checks=[MoveCheck(index=0, label="edge(row=1)", tau_sq_deviation=0.0)])
    df = harness_frame(report)
    assert list(df["move"]) == ["edge(row=1)"]
    assert bool(df["passed"].iloc[0])
    assert list(harness_frame(HarnessReport()).columns) == ["index", "move", "passed"]


def test_friendly_names():
    assert get_friendly_name("tau_abs") == "|tau|"
    assert get_friendly_name("s4_re") == "S4 Re"
