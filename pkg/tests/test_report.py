import json

from enbloc.engine import solve
from enbloc.report import (
    report_from_json,
    report_from_result,
    report_to_json,
    report_to_text,
    trace_record,
    write_report_assets,
    write_trace_file,
)


def analyzed(running_program, running_template):
    res = solve(running_program, running_template)
    rep = report_from_result(res, running_template, "loop.prog", "custom")
    return res, rep


def test_json_round_trip(running_program, running_template):
    _, rep = analyzed(running_program, running_template)
    assert report_from_json(report_to_json(rep)) == rep


def test_json_has_exact_bounds(running_program, running_template):
    _, rep = analyzed(running_program, running_template)
    doc = json.loads(report_to_json(rep))
    assert doc["schema_version"] == 1
    node1 = {r["label"]: r["bound"] for r in doc["nodes"]["1"]}
    assert node1 == {"x1": "2001", "-x1": "2000"}
    st = {r["label"]: r["bound"] for r in doc["nodes"]["st"]}
    assert st == {"x1": "inf", "-x1": "inf"}


def test_text_and_json_present_same_bounds(running_program, running_template):
    _, rep = analyzed(running_program, running_template)
    normalized = [
        " ".join(line.split()) for line in report_to_text(rep).splitlines()
    ]
    doc = json.loads(report_to_json(rep))
    for node, rows in doc["nodes"].items():
        for row in rows:
            assert f"{row['label']} <= {row['bound']}" in normalized


def test_trace_records(running_program, running_template, tmp_path):
    res, _ = analyzed(running_program, running_template)
    path = tmp_path / "trace.jsonl"
    write_trace_file(path, res.trace)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == res.steps
    records = [json.loads(line) for line in lines]
    assert records[0]["step"] == 1
    assert all("switched" in r and "rho" in r for r in records)
    # the third step switches the loop equation through the flip branch
    assert records[2]["switched"][0]["var"] == "x[1,1]"
    assert records[2]["switched"][0]["path"] == {"2": 1}


def test_report_assets(running_program, running_template, tmp_path):
    res, rep = analyzed(running_program, running_template)
    written = write_report_assets(
        tmp_path, rep, res, running_program, running_template
    )
    assert "bounds.csv" in written
    assert "convergence.png" in written
    assert any(name.startswith("invariant_") for name in written)
    csv_text = (tmp_path / "bounds.csv").read_text()
    assert "1,x1,2001" in csv_text.replace("\r", "")
    for name in written:
        assert (tmp_path / name).stat().st_size > 0
