import pandas as pd

from odediscover.aggregate import summarize_records
from odediscover.plots import line_chart, save_svg, summary_series


def test_line_chart_draws_series_and_decade_ticks():
    svg = line_chart({"dsindy": [(250, 0.1), (1000, 0.02)], "l1sindy & co": [(250, 0.3)]},
                     title="coeff_rel_err vs N", xlabel="N", ylabel="error")
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert svg.count("<polyline") == 2
    assert svg.count("<circle") == 3
    assert "1e2" in svg and "1e3" in svg and "1e-2" in svg
    assert "l1sindy &amp; co" in svg


def test_line_chart_drops_points_off_the_log_scale():
    svg = line_chart({"a": [(0.0, 1.0), (10.0, -1.0), (10.0, float("nan"))]}, "t", "x", "y")
    assert "no data" in svg
    assert "<polyline" not in svg
    partial = line_chart({"a": [(0.0, 1.0), (10.0, 2.0)]}, "t", "x", "y")
    assert partial.count("<circle") == 1


def test_summary_series_labels_and_means():
    rows = []
    for n, values in ((250, (0.2, 0.4)), (1000, (0.1, 0.1))):
        for state, value in enumerate(values, start=1):
            rows.append({"system": "s", "method": "dsindy", "N": n, "sigma": 0.1, "seed": 0,
                         "state": state, "metric": "coeff_rel_err", "value": value})
    summary = summarize_records(pd.DataFrame(rows))
    by_n = summary_series(summary, "coeff_rel_err", "N")
    assert list(by_n) == ["dsindy sigma=0.1"]
    assert [x for x, _ in by_n["dsindy sigma=0.1"]] == [250.0, 1000.0]
    assert [round(y, 12) for _, y in by_n["dsindy sigma=0.1"]] == [0.3, 0.1]
    by_sigma = summary_series(summary, "coeff_rel_err", "sigma")
    assert sorted(by_sigma) == ["dsindy N=1000", "dsindy N=250"]
    assert summary_series(summary, "recon_rel_err", "N") == {}


def test_save_svg(tmp_path):
    path = save_svg(line_chart({}, "empty", "x", "y"), tmp_path / "chart.svg")
    assert path.read_text().startswith("<svg")
