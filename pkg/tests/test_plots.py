import csv
import xml.etree.ElementTree as ET

import pytest

from evidential import plots

NS = {"s": "http://www.w3.org/2000/svg"}


def _write(path, columns, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(columns)
        w.writerows(rows)
    return path


def test_empty_band_is_valid_svg(tmp_path):
    rows = [[x / 10, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5] for x in range(11)]
    csv_path = _write(tmp_path / "b.csv", plots.BAND_COLUMNS, rows)
    out = plots.plot_file(csv_path, "bands", tmp_path / "b.svg", title="flat")
    root = ET.parse(out).getroot()
    polys = root.findall("s:polygon", NS)
    assert {p.get("class") for p in polys} == {"reference-band", "model-band"}
    for p in polys:
        ys = {pt.split(",")[1] for pt in p.get("points").split()}
        assert len(ys) == 1  # zero-area polygon


def test_deterministic_output(tmp_path):
    rows = [[x / 10, 0.5 + x / 50, 0.4, 0.3, 0.6, "", "", ""] for x in range(11)]
    csv_path = _write(tmp_path / "b.csv", plots.BAND_COLUMNS, rows)
    a = plots.plot_file(csv_path, "bands", tmp_path / "a.svg", data=([0.1, 0.2], [1, 0])).read_bytes()
    b = plots.plot_file(csv_path, "bands", tmp_path / "b.svg", data=([0.1, 0.2], [1, 0])).read_bytes()
    assert a == b
    root = ET.fromstring(a)
    assert len(root.findall("s:circle", NS)) == 2
    assert [p.get("class") for p in root.findall("s:polygon", NS)] == ["reference-band"]


def test_runs_plot_series_per_run_and_mean(tmp_path):
    rows = [[r, e, r + e / 100] for r in range(4) for e in (10, 20, 30)]
    csv_path = _write(tmp_path / "r.csv", ["run", "epoch", "alpha"], rows)
    root = ET.parse(plots.plot_file(csv_path, "runs", tmp_path / "r.svg", value="alpha")).getroot()
    runs = [p for p in root.findall("s:polyline", NS) if p.get("class") == "run"]
    mean = [p for p in root.findall("s:polyline", NS) if p.get("class") == "mean"]
    assert len(runs) == 4 and len(mean) == 1
    assert sum(len(p.get("points").split()) for p in runs) == len(rows)
    assert len(mean[0].get("points").split()) == 3


def test_w1_plot_one_line_per_model(tmp_path):
    rows = [[x / 4, lam, kind, "theta", 0.1 * x] for kind, lam in (("reference_fit", 0.0), ("outer", 0.0), ("outer", 0.1))
            for x in range(5)]
    csv_path = _write(tmp_path / "w.csv", list(plots.SCHEMAS["w1"]), rows)
    root = ET.parse(plots.plot_file(csv_path, "w1", tmp_path / "w.svg")).getroot()
    assert len([p for p in root.findall("s:polyline", NS) if p.get("class") == "series"]) == 3


def test_schema_mismatch_lists_expected_columns(tmp_path):
    csv_path = _write(tmp_path / "bad.csv", ["x", "w1"], [[0, 1]])
    with pytest.raises(plots.PlotSchemaError, match="x, lambda, loss_kind, component, w1"):
        plots.plot_file(csv_path, "w1", tmp_path / "bad.svg")
    with pytest.raises(plots.PlotSchemaError, match="epoch"):
        plots.plot_file(csv_path, "runs", tmp_path / "bad.svg")
    with pytest.raises(plots.PlotSchemaError):
        plots.plot_file(csv_path, "pie", tmp_path / "bad.svg")


def test_runs_plot_accepts_single_run_trajectory(tmp_path):
    csv_path = _write(tmp_path / "t.csv", ["epoch", "alpha"], [[100, 1.0], [200, 2.0]])
    root = ET.parse(plots.plot_file(csv_path, "runs", tmp_path / "t.svg", value="alpha")).getroot()
    runs = [p for p in root.findall("s:polyline", NS) if p.get("class") == "run"]
    assert len(runs) == 1 and runs[0].get("data-run") == "0"
