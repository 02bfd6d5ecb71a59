"""Report CSVs with provenance headers, and deterministic figures."""

import numpy as np
import pytest

from btmeta import __version__
from btmeta.defenses import CostSummary
from btmeta.evaluate import score
from btmeta.report import (
    ACCURACY_ROW,
    MACRO_ROW,
    MACRO_STD_ROW,
    config_digest,
    fig_bars,
    fig_confusion,
    fig_importance,
    fig_lines,
    provenance_lines,
    read_report_csv,
    write_confusion_csv,
    write_costs_csv,
    write_eval_csv,
    write_importance_csv,
    write_predictions_csv,
    write_series_csv,
    write_sweep_csv,
)
from btmeta.stream import IntervalScore, Prediction

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def sample_report():
    return score(["A", "A", "B", "B"], ["A", "B", "B", "B"])


class TestProvenance:
    def test_digest_is_stable_and_key_order_free(self):
        a = config_digest({"x": 1, "y": "two"})
        b = config_digest({"y": "two", "x": 1})
        assert a == b
        assert len(a) == 12
        assert all(c in "0123456789abcdef" for c in a)

    def test_digest_distinguishes_configs(self):
        assert config_digest({"x": 1}) != config_digest({"x": 2})

    def test_lines_format(self):
        lines = provenance_lines(7, {"k": 3})
        assert lines[0] == f"# btmeta {__version__}"
        assert lines[1] == f"# seed=7 config_digest={config_digest({'k': 3})}"

    def test_every_report_starts_with_provenance(self, tmp_path):
        path = write_eval_csv(tmp_path / "eval.csv", sample_report(), seed=3, config={"a": 1})
        text = path.read_text().splitlines()
        assert text[0] == f"# btmeta {__version__}"
        assert text[1].startswith("# seed=3 config_digest=")


class TestReadReportCsv:
    def test_skips_comments(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("# one\n# two\ncol_a,col_b\n1,2\n")
        header, rows = read_report_csv(p)
        assert header == ["col_a", "col_b"]
        assert rows == [["1", "2"]]

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("# only comments\n")
        with pytest.raises(ValueError, match="no rows"):
            read_report_csv(p)


class TestEvalCsv:
    def test_rows_and_summary_lines(self, tmp_path):
        path = write_eval_csv(tmp_path / "eval.csv", sample_report(), seed=1, config={})
        header, rows = read_report_csv(path)
        assert header == ["label", "precision", "recall", "f1", "support"]
        table = {r[0]: r[1:] for r in rows}
        assert table["A"] == ["1.000000", "0.500000", "0.666667", "2"]
        assert table["B"] == ["0.666667", "1.000000", "0.800000", "2"]
        assert table[MACRO_ROW] == ["0.833333", "0.750000", "0.733333", "4"]
        assert table[MACRO_STD_ROW] == ["0.000000", "0.000000", "0.000000", "1"]
        assert table[ACCURACY_ROW] == ["0.750000", "0.750000", "0.750000", "4"]
        assert [r[0] for r in rows] == ["A", "B", MACRO_ROW, MACRO_STD_ROW, ACCURACY_ROW]


class TestConfusionCsv:
    def test_matrix_layout(self, tmp_path):
        path = write_confusion_csv(tmp_path / "conf.csv", sample_report(), seed=1, config={})
        header, rows = read_report_csv(path)
        assert header == ["true_label", "A", "B"]
        assert rows[0] == ["A", "0.500000", "0.500000"]
        assert rows[1] == ["B", "0.000000", "1.000000"]


class TestOtherCsvs:
    def test_importance(self, tmp_path):
        path = write_importance_csv(
            tmp_path / "imp.csv", ["f_a", "f_b"], np.array([0.75, 0.25]), seed=0, config={}
        )
        _, rows = read_report_csv(path)
        assert rows == [["f_a", "0.75000000"], ["f_b", "0.25000000"]]

    def test_costs_column_order(self, tmp_path):
        row = CostSummary(
            defense="pad",
            accuracy_pct=12.34,
            delay_per_packet_s=0.0,
            extra_duration_s=0.0,
            padding_kb=1.2345,
            dummy_kb=0.0,
            overhead_pct=56.789,
        )
        path = write_costs_csv(tmp_path / "costs.csv", [row], seed=0, config={})
        header, rows = read_report_csv(path)
        assert header == [
            "defense",
            "accuracy_pct",
            "delay_per_packet_s",
            "extra_duration_s",
            "padding_kb",
            "dummy_kb",
            "overhead_pct",
        ]
        assert rows == [["pad", "12.34", "0.000000", "0.000000", "1.234", "0.000", "56.79"]]

    def test_sweep(self, tmp_path):
        points = [(0.05, IntervalScore(1, 0, 1, 1.0, 0.5, 2 / 3))]
        path = write_sweep_csv(tmp_path / "sweep.csv", points, seed=0, config={})
        header, rows = read_report_csv(path)
        assert header == ["threshold", "precision", "recall", "f1"]
        assert rows == [["0.05", "1.000000", "0.500000", "0.666667"]]

    def test_predictions(self, tmp_path):
        preds = [Prediction(1.5, 31.5, "actA", 0.8)]
        path = write_predictions_csv(tmp_path / "preds.csv", preds, seed=0, config={})
        header, rows = read_report_csv(path)
        assert header == ["start_s", "end_s", "label", "confidence"]
        assert rows == [["1.500000", "31.500000", "actA", "0.800000"]]

    def test_series_formats_floats_only(self, tmp_path):
        path = write_series_csv(
            tmp_path / "series.csv", "day,f1,n", [[3, 0.5, "x"]], seed=0, config={}
        )
        header, rows = read_report_csv(path)
        assert header == ["day", "f1", "n"]
        assert rows == [["3", "0.500000", "x"]]


class TestFigures:
    def test_png_outputs(self, tmp_path):
        rep = sample_report()
        paths = [
            fig_confusion(tmp_path / "c.png", rep, "confusion"),
            fig_importance(tmp_path / "i.png", ["f_a", "f_b"], np.array([0.7, 0.3]), "importance"),
            fig_lines(tmp_path / "l.png", [0, 1], {"f1": [0.5, 0.9]}, "x", "y", "lines"),
            fig_bars(tmp_path / "b.png", ["pad", "delay"], [0.3, 0.6], "accuracy", "bars"),
        ]
        for p in paths:
            data = p.read_bytes()
            assert data.startswith(PNG_MAGIC)
            assert len(data) > 1000

    def test_figures_are_byte_deterministic(self, tmp_path):
        rep = sample_report()
        a = fig_confusion(tmp_path / "a.png", rep, "t").read_bytes()
        b = fig_confusion(tmp_path / "b.png", rep, "t").read_bytes()
        assert a == b
        la = fig_lines(tmp_path / "la.png", [0, 1, 2], {"s": [1.0, 0.5, 0.2]}, "x", "y", "t").read_bytes()
        lb = fig_lines(tmp_path / "lb.png", [0, 1, 2], {"s": [1.0, 0.5, 0.2]}, "x", "y", "t").read_bytes()
        assert la == lb
