"""Plain-text and machine-readable report rendering.

Tables are aligned-column text with deterministic byte output: same inputs,
same bytes. Undefined correlations render as "-". Every written report
starts with a header embedding the full effective configuration so any
table is reproducible from its own file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .metrics import CoefficientRow, ErrorSummary, TTestResult
from .util import atomic_write_text

__all__ = [
    "ComparisonRow",
    "render_table",
    "render_comparison_table",
    "render_error_summary_table",
    "render_ttest_table",
    "render_per_coefficient_table",
    "fmt_float",
    "fmt_percent",
    "fmt_sci",
    "report_header",
    "write_report_text",
    "write_report_json",
]

DASH = "-"


def fmt_float(value: float | None, decimals: int = 4) -> str:
    if value is None:
        return DASH
    return f"{value:.{decimals}f}"


def fmt_percent(value: float | None, decimals: int = 2) -> str:
    """Render a fraction in [0, 1] as a percentage string."""
    if value is None:
        return DASH
    return f"{100.0 * value:.{decimals}f}%"


def fmt_sci(value: float | None) -> str:
    if value is None:
        return DASH
    return f"{value:.2e}"


def render_table(headers: list[str], rows: list[list[str]]) -> str:
    """Fixed-width table: first column left-aligned, the rest right-aligned."""
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))

    def _line(cells):
        parts = [cells[0].ljust(widths[0])]
        parts += [cells[i].rjust(widths[i]) for i in range(1, len(cells))]
        return "  ".join(parts).rstrip()

    out = [_line(headers), "-" * (sum(widths) + 2 * (len(widths) - 1))]
    out += [_line(row) for row in rows]
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class ComparisonRow:
    """One method's results for the headline comparison table."""

    method: str
    mse: float | None = None
    rp1: float | None = None
    rp2: float | None = None
    rp3: float | None = None
    mmd: float | None = None
    pearson: float | None = None
    spearman: float | None = None
    accuracy: float | None = None
    msd: float | None = None
    deviation: float | None = None


def render_comparison_table(rows: list[ComparisonRow]) -> str:
    headers = [
        "Method",
        "MSE",
        "top-1",
        "top-2",
        "top-3",
        "MMD",
        "P-Cor",
        "S-Cor",
        "Acc.",
        "MSD",
        "Deviation",
    ]
    body = [
        [
            r.method,
            fmt_float(r.mse),
            fmt_percent(r.rp1),
            fmt_percent(r.rp2),
            fmt_percent(r.rp3),
            fmt_float(r.mmd, 2),
            fmt_percent(r.pearson),
            fmt_percent(r.spearman),
            fmt_float(r.accuracy),
            fmt_float(r.msd),
            fmt_float(r.deviation),
        ]
        for r in rows
    ]
    return render_table(headers, body)


def render_error_summary_table(rows: list[tuple[str, ErrorSummary]]) -> str:
    """Mean/median/std/P90 of per-sample MSE, scaled by 1e-3 as reported."""
    headers = ["Method", "Mean MSE", "Median MSE", "Std", "P90", "(x1e-3)"]
    body = [
        [
            method,
            f"{s.mean * 1e3:.2f}",
            f"{s.median * 1e3:.2f}",
            f"{s.std * 1e3:.2f}",
            f"{s.p90 * 1e3:.2f}",
            "",
        ]
        for method, s in rows
    ]
    return render_table(headers, body)


def render_ttest_table(rows: list[tuple[str, TTestResult]]) -> str:
    headers = ["Comparison", "Delta MSE", "t-statistic", "p-value"]
    body = [
        [
            label,
            fmt_sci(r.delta_mse),
            f"{r.t_statistic:.2f}",
            fmt_sci(r.p_value),
        ]
        for label, r in rows
    ]
    return render_table(headers, body)


def render_per_coefficient_table(rows: list[CoefficientRow]) -> str:
    headers = ["", "MSE", "P Corr", "S Corr", "Deviation"]
    body = [
        [
            r.name,
            fmt_float(r.mse),
            fmt_float(r.pearson),
            fmt_float(r.spearman),
            fmt_float(r.deviation),
        ]
        for r in rows
    ]
    return render_table(headers, body)


def report_header(title: str, config: dict) -> str:
    return f"# {title}\n# config: {json.dumps(config, sort_keys=True)}\n"


def write_report_text(path, title: str, config: dict, sections: list[tuple[str, str]]) -> None:
    parts = [report_header(title, config)]
    for name, text in sections:
        parts.append(f"\n## {name}\n{text}")
    atomic_write_text(path, "".join(parts))


def write_report_json(path, doc: dict) -> None:
    atomic_write_text(path, json.dumps(doc, sort_keys=True, indent=1) + "\n")
