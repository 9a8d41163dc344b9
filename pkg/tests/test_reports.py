import json

from faceact.metrics import CoefficientRow, ErrorSummary, TTestResult
from faceact.reports import (
    ComparisonRow,
    fmt_float,
    fmt_percent,
    fmt_sci,
    render_comparison_table,
    render_error_summary_table,
    render_per_coefficient_table,
    render_ttest_table,
    report_header,
    write_report_text,
)

# Published headline numbers used purely as layout fixtures.
COMPARISON_FIXTURE = [
    ComparisonRow("GT-test", mse=0.0, rp1=0.2428, rp2=0.3860, rp3=0.4848, mmd=1.00,
                  pearson=1.0, spearman=1.0, accuracy=1.0, msd=0.0, deviation=0.0),
    ComparisonRow("DeadFace", mse=0.0316, rp1=0.1343, rp2=0.2306, rp3=0.3025, mmd=2.12,
                  pearson=0.6848, spearman=0.6703, accuracy=0.9836, msd=0.0094,
                  deviation=0.0691),
    ComparisonRow("SBCA", mse=0.0190, rp1=None, rp2=None, rp3=None, mmd=None,
                  pearson=0.6744, spearman=0.6561, accuracy=0.8449, msd=0.0298,
                  deviation=0.1470),
    ComparisonRow("Ours", mse=0.0034, rp1=0.2215, rp2=0.3706, rp3=0.4806, mmd=1.18,
                  pearson=0.7050, spearman=0.6332, accuracy=0.9967, msd=0.0060,
                  deviation=0.0554),
]

COMPARISON_GOLDEN = """\
Method       MSE   top-1   top-2   top-3   MMD    P-Cor    S-Cor    Acc.     MSD  Deviation
-------------------------------------------------------------------------------------------
GT-test   0.0000  24.28%  38.60%  48.48%  1.00  100.00%  100.00%  1.0000  0.0000     0.0000
DeadFace  0.0316  13.43%  23.06%  30.25%  2.12   68.48%   67.03%  0.9836  0.0094     0.0691
SBCA      0.0190       -       -       -     -   67.44%   65.61%  0.8449  0.0298     0.1470
Ours      0.0034  22.15%  37.06%  48.06%  1.18   70.50%   63.32%  0.9967  0.0060     0.0554
"""

TTEST_FIXTURE = [
    ("A1 vs A0", TTestResult(delta_mse=-1.42e-4, t_statistic=-5.28, p_value=1.35e-7, n=4700)),
    ("A2 vs A1", TTestResult(delta_mse=-1.45e-4, t_statistic=8.21, p_value=2.91e-16, n=4700)),
    ("A2 vs A0", TTestResult(delta_mse=-2.87e-4, t_statistic=10.61, p_value=5.43e-26, n=4700)),
]

TTEST_GOLDEN = """\
Comparison  Delta MSE  t-statistic   p-value
--------------------------------------------
A1 vs A0    -1.42e-04        -5.28  1.35e-07
A2 vs A1    -1.45e-04         8.21  2.91e-16
A2 vs A0    -2.87e-04        10.61  5.43e-26
"""

SUMMARY_FIXTURE = [
    ("A0", ErrorSummary(mean=3.66e-3, median=3.44e-3, std=1.64e-3, p90=5.74e-3)),
    ("A1", ErrorSummary(mean=3.52e-3, median=3.28e-3, std=1.51e-3, p90=5.57e-3)),
    ("A2", ErrorSummary(mean=3.34e-3, median=3.12e-3, std=1.49e-3, p90=5.25e-3)),
]

SUMMARY_GOLDEN = """\
Method  Mean MSE  Median MSE   Std   P90  (x1e-3)
-------------------------------------------------
A0          3.66        3.44  1.64  5.74
A1          3.52        3.28  1.51  5.57
A2          3.34        3.12  1.49  5.25
"""

COEFFICIENT_FIXTURE = [
    CoefficientRow("MouthRight", 0.0, None, None, 0.0),
    CoefficientRow("TongueOut", 0.0, None, None, 0.0),
    CoefficientRow("JawRight", 0.0000, -0.0003, -0.0003, 0.0025),
    CoefficientRow("JawOpen", 0.0037, 0.8282, 0.8020, 0.0596),
    CoefficientRow("Average", 0.0036, 0.5966, 0.5429, 0.0456),
]

COEFFICIENT_GOLDEN = """\
               MSE   P Corr   S Corr  Deviation
-----------------------------------------------
MouthRight  0.0000        -        -     0.0000
TongueOut   0.0000        -        -     0.0000
JawRight    0.0000  -0.0003  -0.0003     0.0025
JawOpen     0.0037   0.8282   0.8020     0.0596
Average     0.0036   0.5966   0.5429     0.0456
"""


class TestFormatting:
    def test_fmt_float(self):
        assert fmt_float(0.0034) == "0.0034"
        assert fmt_float(None) == "-"
        assert fmt_float(1.18, 2) == "1.18"

    def test_fmt_percent(self):
        assert fmt_percent(0.2215) == "22.15%"
        assert fmt_percent(None) == "-"

    def test_fmt_sci(self):
        assert fmt_sci(5.43e-26) == "5.43e-26"
        assert fmt_sci(-1.42e-4) == "-1.42e-04"


class TestGoldenTables:
    def test_comparison_layout(self):
        assert render_comparison_table(COMPARISON_FIXTURE) == COMPARISON_GOLDEN

    def test_comparison_byte_deterministic(self):
        a = render_comparison_table(COMPARISON_FIXTURE).encode()
        b = render_comparison_table(COMPARISON_FIXTURE).encode()
        assert a == b

    def test_undefined_cells_render_dash(self):
        table = render_comparison_table(COMPARISON_FIXTURE)
        sbca = next(line for line in table.splitlines() if line.startswith("SBCA"))
        assert sbca.split().count("-") == 4

    def test_ttest_layout(self):
        assert render_ttest_table(TTEST_FIXTURE) == TTEST_GOLDEN

    def test_summary_layout(self):
        assert render_error_summary_table(SUMMARY_FIXTURE) == SUMMARY_GOLDEN

    def test_per_coefficient_layout(self):
        assert render_per_coefficient_table(COEFFICIENT_FIXTURE) == COEFFICIENT_GOLDEN


class TestReportFiles:
    def test_header_embeds_config(self):
        header = report_header("demo", {"seed": 7, "threshold": 0.1})
        assert header.startswith("# demo\n# config: ")
        embedded = json.loads(header.splitlines()[1].split("# config: ")[1])
        assert embedded == {"seed": 7, "threshold": 0.1}

    def test_write_report_text(self, tmp_path):
        path = tmp_path / "report.txt"
        write_report_text(
            path, "demo", {"seed": 1},
            [("Comparison", render_comparison_table(COMPARISON_FIXTURE))],
        )
        text = path.read_text()
        assert "## Comparison" in text
        assert "GT-test" in text
        # byte-deterministic rewrite
        path2 = tmp_path / "r2.txt"
        write_report_text(
            path2, "demo", {"seed": 1},
            [("Comparison", render_comparison_table(COMPARISON_FIXTURE))],
        )
        assert path.read_bytes() == path2.read_bytes()
