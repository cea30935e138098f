"""Tabulate invariant results for reports."""
from typing import Iterable, List, Optional

import pandas as pd

from src.perturbative.invariants import HarnessReport, LoopInvariants


class ResultProcessor:
    """Turn LoopInvariants along an m-path into a pandas DataFrame."""

    # Columns derived from tau and the loop invariants
    CALCULATED_COLUMNS = ["tau_abs", "s2_tau3_re", "s2_tau3_im", "s3_tau6_re", "s3_tau6_im"]
    RANGE_COLUMNS = ("tau_abs", "volume", "cs_class")

    def __init__(self, results: Iterable[LoopInvariants]):
        self.results: List[LoopInvariants] = list(results)
        self.df = self._results_to_dataframe(self.results)
        self._add_calculated_metrics()

    def _results_to_dataframe(self, results: List[LoopInvariants]) -> pd.DataFrame:
        """One row per point; values as floats for display."""
        if not results:
            return pd.DataFrame()

        rows = []
        for step, inv in enumerate(results):
            ctx = inv.ctx
            row = {
                "step": step,
                "m_re": float(ctx.re(inv.m)),
                "m_im": float(ctx.im(inv.m)),
                "tau_re": float(ctx.re(inv.tau)),
                "tau_im": float(ctx.im(inv.tau)),
                "volume": float(inv.complex_volume.volume),
                "cs_class": float(inv.complex_volume.cs_class),
                "standard_lift": inv.complex_volume.standard_lift,
            }
            for n, value in sorted(inv.loops.items()):
                row[f"s{n}_re"] = float(ctx.re(value))
                row[f"s{n}_im"] = float(ctx.im(value))
            rows.append(row)
        return pd.DataFrame(rows)

    def _add_calculated_metrics(self):
        """Add |tau| and the tau-normalized loop invariants."""
        if self.df.empty:
            return

        self.df["tau_abs"] = (self.df["tau_re"] ** 2 + self.df["tau_im"] ** 2) ** 0.5
        for n, column in ((2, "s2_tau3"), (3, "s3_tau6")):
            values = [inv.loop_normalized(n) if n in inv.loops else None for inv in self.results]
            self.df[f"{column}_re"] = [float(v.real) if v is not None else None for v in values]
            self.df[f"{column}_im"] = [float(v.imag) if v is not None else None for v in values]

    def get_summary_stats(self) -> dict:
        """Ranges of the tabulated quantities."""
        if self.df.empty:
            return {"points": 0}
        stats = {"points": len(self.df)}
        for col in self.RANGE_COLUMNS:
            stats[col] = {"min": float(self.df[col].min()), "max": float(self.df[col].max())}
        return stats


def summary_frame(inv: LoopInvariants, meta: Optional[dict] = None, digits: int = 20) -> pd.DataFrame:
    """Two-column (quantity, value) table of one result, values as decimal strings."""
    rows = [(get_friendly_name(k), str(v)) for k, v in (meta or {}).items()]
    payload = inv.to_dict(digits)
    rows.append((get_friendly_name("precision"), str(payload["precision"])))
    rows.append((get_friendly_name("volume"), payload["s0"]["volume"]))
    rows.append((get_friendly_name("cs_class"), payload["s0"]["re_mod_class"]))
    for key in ("tau",):
        rows.append((get_friendly_name(key), _complex_text(payload[key]["value"])))
    rows.append((get_friendly_name("s2"), _complex_text(payload["s2"]["value"])))
    for n in sorted(inv.loops):
        if n >= 3:
            rows.append((get_friendly_name(f"s{n}"), _complex_text(payload[f"s{n}"])))
    return pd.DataFrame(rows, columns=["Quantity", "Value"])


def harness_frame(report: HarnessReport) -> pd.DataFrame:
    """One row per move of an invariance-harness run."""
    if not report.checks:
        return pd.DataFrame(columns=["index", "move", "passed"])
    return pd.DataFrame([check.to_dict() for check in report.checks])


def _complex_text(value: dict) -> str:
    im = value["im"]
    sign = "" if im.startswith("-") else "+"
    return f"{value['re']}{sign}{im}i"


# Mapping of column names to display names
FIELD_LABELS = {
    "name": "Manifold",
    "source": "Source",
    "precision": "Precision (bits)",
    "step": "Step",
    "m_re": "Re m",
    "m_im": "Im m",
    "tau": "Torsion tau",
    "tau_re": "Re tau",
    "tau_im": "Im tau",
    "tau_abs": "|tau|",
    "volume": "Volume (-Im S0)",
    "cs_class": "Re S0 mod pi^2/6",
    "standard_lift": "Standard Lift",
    "s2": "S2",
    "s3": "S3",
    "s2_tau3_re": "Re S2 tau^3",
    "s2_tau3_im": "Im S2 tau^3",
    "s3_tau6_re": "Re S3 tau^6",
    "s3_tau6_im": "Im S3 tau^6",
    "tau_sq_deviation": "tau^2 Deviation",
    "s3_deviation": "S3 Deviation",
    "s2_class_deviation": "S2 Class Deviation",
}


def get_friendly_name(field_id: str) -> str:
    """Get a friendly display name for a column."""
    return FIELD_LABELS.get(field_id, field_id.replace("_", " ").title())
