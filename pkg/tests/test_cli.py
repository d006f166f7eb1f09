import csv
import json
from pathlib import Path

import pytest

from crunch.cli import example_lines, main

DAYS_HEADER = ("schema_version,policy,seed,day,revenue,blocking_cost,profit,crunch_profit,offered,crunched,"
               "crunched_Interactive,accepted_Interactive,crunched_Elastic,accepted_Elastic,"
               "crunched_Background,accepted_Background")
SUMMARY_HEADER = ("schema_version,policy,seeds,days,crunch_profit_mean,crunch_profit_ci_lo,crunch_profit_ci_hi,"
                  "daily_profit_mean,daily_revenue_mean,crunched_fraction,mean_path_hops,mean_decision_ms,"
                  "acceptance_Interactive,acceptance_Elastic,acceptance_Background")
REPO = Path(__file__).resolve().parents[1]


def test_example_output(capsys):
    assert main(["example"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == example_lines()
    assert out[1].startswith("SP-k1") and "cost $50 > $45 -> block" in out[1]
    assert "cost $50 > $45 -> block" in out[2]
    assert "degrade C1 by 5 Gbps, cost $15, serve at 5 Gbps via A-B-C-D-E-F" in out[3]
    assert "A-G-B-C-E-F" in out[4] and "path cost $35" in out[4]


def _small_manifest(tmp_path, **extra):
    scen = {"name": "tiny", "capacity_gbps": 30.0, "lam_peak": 0.05, "amplitude": 0.6, "days": 1, "warmup_days": 0}
    (tmp_path / "tiny.json").write_text(json.dumps(scen))
    man = {
        "scenario": "tiny.json",
        "policies": [{"name": "Baseline", "kind": "baseline"}, {"name": "PROVISIONER-k1", "kind": "provisioner", "k": 1}],
        "seeds": [0],
        "out": str(tmp_path / "out"),
        **extra,
    }
    (tmp_path / "m.json").write_text(json.dumps(man))
    return tmp_path / "m.json"


def test_run_writes_artifacts(tmp_path, capsys):
    m = _small_manifest(tmp_path)
    assert main(["run", "--manifest", str(m), "--seeds", "0,1"]) == 0
    out = tmp_path / "out"
    assert (out / "days.csv").read_text().splitlines()[0] == DAYS_HEADER
    assert (out / "summary.csv").read_text().splitlines()[0] == SUMMARY_HEADER
    rows = list(csv.DictReader(open(out / "days.csv")))
    assert len(rows) == 2 * 2 and {r["seed"] for r in rows} == {"0", "1"}
    summary = list(csv.DictReader(open(out / "summary.csv")))
    assert [r["policy"] for r in summary] == ["Baseline", "PROVISIONER-k1"]
    recs = [json.loads(l) for l in open(out / "decisions.jsonl")]
    assert recs and {r["approach"] for r in recs} == {"Baseline", "PROVISIONER-k1"}
    assert json.loads((out / "scenario.json").read_text())["name"] == "tiny"
    first = (out / "days.csv").read_text()
    assert main(["run", "--manifest", str(m), "--seeds", "0,1"]) == 0
    assert (out / "days.csv").read_text() == first


def test_missing_topology_exits_2(tmp_path, capsys):
    m = _small_manifest(tmp_path, topology="nowhere/topo.json")
    assert main(["run", "--manifest", str(m)]) == 2
    assert "nowhere/topo.json" in capsys.readouterr().err


def test_missing_manifest_exits_2(tmp_path, capsys):
    assert main(["run", "--manifest", str(tmp_path / "absent.json")]) == 2
    assert "absent.json" in capsys.readouterr().err


def test_dump_cag_relaxed_view(capsys):
    assert main(["dump-cag", "--src", "A", "--dst", "F", "--bw", "5"]) == 0
    dot = capsys.readouterr().out
    assert dot.startswith("digraph") and "C1" in dot and "Source" in dot


def test_dump_cag_same_endpoints(capsys):
    assert main(["dump-cag", "--src", "A", "--dst", "A", "--bw", "5"]) == 2
    assert main(["dump-cag", "--src", "A", "--dst", "Q", "--bw", "5"]) == 2


def test_dump_cag_from_snapshot(tmp_path, capsys):
    from crunch.worked import worked_example_data

    p = tmp_path / "snap.json"
    p.write_text(json.dumps(worked_example_data()))
    assert main(["dump-cag", "--state", str(p), "--src", "A", "--dst", "F", "--bw", "10", "--view", "cap-req"]) == 0
    assert "C4" in capsys.readouterr().out


def test_calibrate_zero_target(tmp_path, capsys):
    scen = tmp_path / "t.json"
    scen.write_text(json.dumps({"name": "quiet", "lam_peak": 0.001, "amplitude": 0.0}))
    out = tmp_path / "cal.json"
    assert main(["calibrate", "--peak", "0", "--duration", "0", "--template", str(scen), "--days", "1", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["amplitude"] == 0.0 and data["calibration_trace"]


def test_calibrate_failure_exits_1(tmp_path, capsys):
    scen = tmp_path / "t.json"
    scen.write_text(json.dumps({"name": "busy", "lam_peak": 0.3, "amplitude": 0.0, "capacity_gbps": 20.0}))
    assert main(["calibrate", "--peak", "0", "--duration", "0", "--template", str(scen), "--days", "1"]) == 1
    assert "calibration failed" in capsys.readouterr().err


def test_bundled_manifest_one_day(tmp_path, capsys):
    code = main(["run", "--manifest", str(REPO / "manifests" / "scenario_a.json"), "--seeds", "0",
                 "--days", "1", "--warmup-days", "0", "--out", str(tmp_path)])
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "summary.csv")))
    assert len(rows) == 8
