import json
import os

import pytest

from cnlp import lint
from cnlp.diagnostics import (
    CODES, Diagnostic, diag, error_file_text, read_error_file, render_text, sort_diagnostics, write_error_file,
)
from cnlp.model import Span


def test_taxonomy_has_fourteen_codes():
    assert len(CODES) == 14
    assert [c for c in CODES if c.startswith("E00")] == ["E001", "E002", "E003", "E004", "E005"]
    assert sum(c.startswith("E1") for c in CODES) == 9


def test_unknown_code_rejected():
    with pytest.raises(ValueError):
        Diagnostic("E999", "x", Span.point(), "m")
    with pytest.raises(ValueError):
        Diagnostic("E101", "x", Span.point(), "")


def test_error_file_from_running_example(tmp_path, buggy_source, background):
    report = lint(buggy_source, background)
    out = tmp_path / "errors.json"
    write_error_file(report, out)
    obj = json.loads(out.read_text())
    assert len(obj["diagnostics"]) == 1
    entry = obj["diagnostics"][0]
    for key in ("code", "severity", "path", "line", "col", "message", "reason"):
        assert key in entry
    assert entry["code"] == "E107"
    assert entry["severity"] == "error"
    assert read_error_file(out) == report.diagnostics


def test_empty_report_file(tmp_path):
    out = tmp_path / "e.json"
    write_error_file([], out)
    assert json.loads(out.read_text()) == {"diagnostics": []}


def test_missing_directory_raises_without_partial(tmp_path):
    with pytest.raises(OSError):
        write_error_file([], tmp_path / "nope" / "e.json")
    assert not (tmp_path / "nope").exists()


def test_failed_write_cleans_temp(tmp_path, monkeypatch):
    def boom(*_a, **_k):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        write_error_file([], tmp_path / "e.json")
    assert list(tmp_path.iterdir()) == []


def test_render_text_line_format():
    d = diag("E108", "worker.main_flow.step_2.command1.paras.intensity", Span(14, 5, 14, 9), reason="bad value")
    text = render_text([d], filename="agent.cnlp")
    first, last = text.splitlines()
    assert first.startswith("agent.cnlp:14:")
    assert "[E108]" in first
    assert last == "1 error(s)"


def test_render_empty():
    assert render_text([]) == "0 error(s)\n"


def test_render_keeps_report_order():
    a = diag("E101", "a", Span(9, 1, 9, 1))
    b = diag("E003", "b", Span(2, 1, 2, 1))
    lines = render_text([a, b]).splitlines()
    assert "[E101]" in lines[0] and "[E003]" in lines[1]


def test_render_color_wraps_code():
    text = render_text([diag("E101", "a", Span(1, 1, 1, 1))], color=True)
    assert "\x1b[31m" in text


def test_sort_and_obj_round_trip():
    ds = [diag("E104", "p", Span(3, 1, 3, 2)), diag("E101", "q", Span(1, 5, 1, 6)), diag("E003", "r", Span(3, 1, 3, 1))]
    assert [d.code for d in sort_diagnostics(ds)] == ["E101", "E003", "E104"]
    assert [Diagnostic.from_obj(d.to_obj()) for d in ds] == ds
    assert json.loads(error_file_text(ds))["diagnostics"][0]["path"] == "p"
