"""Excel report generator with charts for invariant computations."""
from pathlib import Path
from typing import Optional

import pandas as pd
from openpyxl import Workbook
from openpyxl.chart import BarChart, LineChart, Reference
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils.dataframe import dataframe_to_rows

from src.data.processor import ResultProcessor, get_friendly_name, harness_frame, summary_frame
from src.perturbative.invariants import HarnessReport, LoopInvariants


class InvariantReportGenerator:
    """Generate Excel reports from invariant results, m-sweeps and harness runs."""

    # Styling constants
    HEADER_FILL = PatternFill(start_color="1F4E79", end_color="1F4E79", fill_type="solid")
    HEADER_FONT = Font(color="FFFFFF", bold=True, size=11)
    TITLE_FONT = Font(bold=True, size=14)
    BORDER = Border(
        left=Side(style="thin"),
        right=Side(style="thin"),
        top=Side(style="thin"),
        bottom=Side(style="thin")
    )

    # m-sweep columns charted on the Deformation sheet
    SWEEP_CHARTS = [
        ("tau_abs",),
        ("s2_tau3_re", "s2_tau3_im"),
        ("s3_tau6_re", "s3_tau6_im"),
    ]

    # Columns summarized by min/max under the sweep table
    RANGE_COLUMNS = ResultProcessor.RANGE_COLUMNS

    def __init__(self, title: str = "nz-loops"):
        self.title = title
        self.wb = Workbook()
        self.wb.remove(self.wb.active)

    def _add_dataframe_to_sheet(self, ws, df: pd.DataFrame, start_row: int = 1):
        """Add a DataFrame to a worksheet with styling."""
        for r_idx, row in enumerate(dataframe_to_rows(df, index=False, header=True), start_row):
            for c_idx, value in enumerate(row, 1):
                cell = ws.cell(row=r_idx, column=c_idx, value=value)
                cell.border = self.BORDER
                if r_idx == start_row:
                    cell.fill = self.HEADER_FILL
                    cell.font = self.HEADER_FONT
                cell.alignment = Alignment(horizontal="center")

        # Auto-adjust column widths
        for col in ws.columns:
            letter = col[0].column_letter
            lengths = [len(str(cell.value)) for cell in col if cell.value is not None]
            if lengths:
                ws.column_dimensions[letter].width = min(max(lengths) + 2, 50)

    def _add_title(self, ws, text: str, width: int):
        ws.cell(row=1, column=1, value=text)
        ws.cell(row=1, column=1).font = self.TITLE_FONT
        if width > 1:
            ws.merge_cells(start_row=1, start_column=1, end_row=1, end_column=width)

    def add_summary_sheet(self, inv: LoopInvariants, meta: Optional[dict] = None, digits: int = 20):
        """Datum metadata and the invariants at a single point."""
        ws = self.wb.create_sheet("Summary", 0)
        df = summary_frame(inv, meta, digits)
        self._add_title(ws, f"{self.title}: invariants", 2)
        self._add_dataframe_to_sheet(ws, df, start_row=3)

    def add_deformation_sheet(self, processor: ResultProcessor, sheet_name: str = "Deformation"):
        """The m-sweep table with line charts against the sweep step."""
        df = processor.df
        if df.empty:
            return

        ws = self.wb.create_sheet(sheet_name)
        columns = list(df.columns)
        display = df.rename(columns={col: get_friendly_name(col) for col in df.columns})
        self._add_title(ws, f"{self.title}: deformation along m", len(columns))
        self._add_dataframe_to_sheet(ws, display, start_row=3)

        # Ranges over the sweep
        stats = processor.get_summary_stats()
        stats_row = len(df) + 5
        ws.cell(row=stats_row, column=1, value="Sweep Ranges").font = Font(bold=True)
        ws.cell(row=stats_row, column=2, value="Min")
        ws.cell(row=stats_row, column=3, value="Max")
        for offset, col in enumerate(self.RANGE_COLUMNS, start=1):
            ws.cell(row=stats_row + offset, column=1, value=get_friendly_name(col))
            ws.cell(row=stats_row + offset, column=2, value=stats[col]["min"])
            ws.cell(row=stats_row + offset, column=3, value=stats[col]["max"])

        chart_row = stats_row + len(self.RANGE_COLUMNS) + 3
        step_col = columns.index("step") + 1
        charts = [group for group in self.SWEEP_CHARTS if all(c in columns for c in group)]
        for i, group in enumerate(charts):
            chart = LineChart()
            chart.title = " / ".join(get_friendly_name(c) for c in group)
            chart.style = 10
            chart.x_axis.title = get_friendly_name("step")
            for col in group:
                data_ref = Reference(ws, min_col=columns.index(col) + 1, min_row=3, max_row=len(df) + 3)
                chart.add_data(data_ref, titles_from_data=True)
            cats_ref = Reference(ws, min_col=step_col, min_row=4, max_row=len(df) + 3)
            chart.set_categories(cats_ref)
            chart.width = 15
            chart.height = 8

            # Two charts per row
            col_position = ((i % 2) * 9) + 1
            row_position = chart_row + (i // 2) * 16
            ws.add_chart(chart, f"{chr(65 + col_position - 1)}{row_position}")

    def add_invariance_sheet(self, report: HarnessReport, sheet_name: str = "Invariance"):
        """Harness table with a bar chart of the deviations per move."""
        df = harness_frame(report)
        ws = self.wb.create_sheet(sheet_name)
        self._add_title(ws, f"{self.title}: invariance checks", max(len(df.columns), 1))
        display = df.rename(columns={col: get_friendly_name(col) for col in df.columns})
        self._add_dataframe_to_sheet(ws, display, start_row=3)

        columns = list(df.columns)
        if len(df) > 0 and "tau_sq_deviation" in columns:
            chart = BarChart()
            chart.title = "Deviations per move"
            chart.style = 10
            chart.type = "col"
            for col in ("tau_sq_deviation", "s3_deviation"):
                data_ref = Reference(ws, min_col=columns.index(col) + 1, min_row=3, max_row=len(df) + 3)
                chart.add_data(data_ref, titles_from_data=True)
            cats_ref = Reference(ws, min_col=columns.index("move") + 1, min_row=4, max_row=len(df) + 3)
            chart.set_categories(cats_ref)
            chart.width = 18
            chart.height = 10
            ws.add_chart(chart, f"A{len(df) + 6}")

    def save(self, filepath: str):
        """Save the workbook to a file."""
        Path(filepath).parent.mkdir(parents=True, exist_ok=True)
        self.wb.save(filepath)
        return filepath


def generate_invariant_report(output_path: str, sweep: list, meta: Optional[dict] = None,
                              harness: Optional[HarnessReport] = None, title: str = "nz-loops") -> str:
    """Summary of the last sweep point, the deformation sheet and optional harness."""
    if not sweep:
        raise ValueError("a report needs at least one computed point")
    generator = InvariantReportGenerator(title)
    generator.add_summary_sheet(sweep[0], meta)
    generator.add_deformation_sheet(ResultProcessor(sweep))
    if harness is not None:
        generator.add_invariance_sheet(harness)
    return generator.save(output_path)
