import csv
import json

import pytest

import reference_scorer
from procrl.cli import main
from procrl.io import read_json

from conftest import FIXTURES


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture
def instances(tmp_path):
    p = tmp_path / "inst.jsonl"
    assert run("generate", "--n", 12, "--seed", 0, "--out", p) == 0
    return p


def tiny_train_config(tmp_path, **over):
    doc = {"learning_rate": 0.1, "batch_size": 4, "iterations": 3, "seed": 1, "dataset": {"n_instances": 12}}
    doc.update(over)
    p = tmp_path / "train.json"
    p.write_text(json.dumps(doc))
    return p


def test_generate_writes_manifest(instances):
    m = read_json(instances.with_name(instances.name + ".manifest.json"))
    assert m["command"] == "generate" and m["seed"] == 0 and m["outputs"] == ["inst.jsonl"]
    assert {"config", "inputs", "tool_version", "duration_s"} <= set(m)


def test_score_golden_file(tmp_path):
    out = tmp_path / "scores.jsonl"
    assert run("score", "--instances", FIXTURES / "golden_instances.jsonl",
               "--traces", FIXTURES / "golden_traces.jsonl", "--out", out) == 0
    assert out.read_bytes() == (FIXTURES / "golden_scores.jsonl").read_bytes()
    rows = [json.loads(l) for l in out.open()]
    assert all(set(r) == {"instance_id", "acc", "format", "consistency", "pattern", "logic", "domain",
                          "overthink", "total"} for r in rows)
    assert (tmp_path / "scores.jsonl.manifest.json").exists()


def test_score_empty_trace_file(tmp_path):
    traces = tmp_path / "t.jsonl"
    traces.write_text("")
    out = tmp_path / "o.jsonl"
    assert run("score", "--instances", FIXTURES / "golden_instances.jsonl", "--traces", traces, "--out", out) == 0
    assert out.read_text() == ""


def test_score_unknown_instance_reports_line(tmp_path, capsys):
    traces = tmp_path / "t.jsonl"
    traces.write_text('{"instance_id": "speaker", "raw": ""}\n{"instance_id": "ghost", "raw": ""}\n')
    out = tmp_path / "o.jsonl"
    assert run("score", "--instances", FIXTURES / "golden_instances.jsonl", "--traces", traces, "--out", out) == 2
    assert ":2:" in capsys.readouterr().err
    assert not out.exists()


def test_score_with_weights_and_env_config_dir(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg"
    cfg.mkdir()
    (cfg / "w.json").write_text(json.dumps({"alpha_acc": 0.0}))
    monkeypatch.setenv("PROCRL_CONFIG_DIR", str(cfg))
    monkeypatch.chdir(tmp_path)
    out = tmp_path / "o.jsonl"
    assert run("score", "--instances", FIXTURES / "golden_instances.jsonl",
               "--traces", FIXTURES / "golden_traces.jsonl", "--weights", "w.json", "--out", out) == 0
    first = json.loads(out.open().readline())
    assert first["acc"] == 1.0 and first["total"] == pytest.approx(
        first["format"] + first["consistency"] + first["pattern"] + first["logic"] + first["domain"]
        + first["overthink"], abs=1e-12)
    # a weights.json in the config dir is picked up by default
    (cfg / "weights.json").write_text(json.dumps({"alpha_acc": 0.0}))
    out2 = tmp_path / "o2.jsonl"
    assert run("score", "--instances", FIXTURES / "golden_instances.jsonl",
               "--traces", FIXTURES / "golden_traces.jsonl", "--out", out2) == 0
    assert out2.read_text() == out.read_text()


def test_bad_weights_field_named(tmp_path, capsys):
    w = tmp_path / "w.json"
    w.write_text(json.dumps({"alpha_acc": 1.0, "alpha_bogus": 2}))
    assert run("score", "--instances", FIXTURES / "golden_instances.jsonl",
               "--traces", FIXTURES / "golden_traces.jsonl", "--weights", w, "--out", tmp_path / "o") == 1
    assert "alpha_bogus" in capsys.readouterr().err


def test_augment(tmp_path, instances):
    out = tmp_path / "aug.jsonl"
    assert run("augment", "--instances", instances, "--out", out) == 0
    assert len(out.read_text().splitlines()) == 36
    tpl = tmp_path / "t.json"
    tpl.write_text(json.dumps({"templates": [{"name": "q", "pattern": "Pick: {choices}"}]}))
    assert run("augment", "--instances", instances, "--templates", tpl, "--out", out) == 0
    assert len(out.read_text().splitlines()) == 12
    tpl.write_text(json.dumps({"templates": [{"name": "q", "pattern": "no slot"}]}))
    assert run("augment", "--instances", instances, "--templates", tpl, "--out", out) == 1


def test_train_outputs(tmp_path):
    out = tmp_path / "run"
    assert run("train", "--config", tiny_train_config(tmp_path), "--out", out) == 0
    for name in ("policy.json", "reference_policy.json", "dataset.jsonl", "log.jsonl", "log.csv", "manifest.json"):
        assert (out / name).exists(), name
    rows = list(csv.DictReader((out / "log.csv").open()))
    assert len(rows) == 3
    m = read_json(out / "manifest.json")
    assert m["command"] == "train" and m["seed"] == 1 and m["config"]["learning_rate"] == 0.1


def test_train_zero_iterations(tmp_path):
    out = tmp_path / "run"
    assert run("train", "--config", tiny_train_config(tmp_path), "--iterations", 0, "--out", out) == 0
    assert read_json(out / "policy.json") == read_json(out / "reference_policy.json")
    assert (out / "log.jsonl").read_text() == ""
    assert (out / "log.csv").read_text().strip() == "iteration,mean_reward,accuracy,consistency,mean_think_len,kl,loss"


@pytest.mark.parametrize("over,field", [
    ({"bogus": 1}, "bogus"),
    ({"dataset": {"n_instances": 5, "sizee": 3}}, "sizee"),
    ({"policy": {"temperature": 1}}, "temperature"),
    ({"weights": {"alpha_x": 1}}, "alpha_x"),
    ({"group_size": 1}, "group_size"),
])
def test_train_config_errors_name_field(tmp_path, capsys, over, field):
    out = tmp_path / "run"
    assert run("train", "--config", tiny_train_config(tmp_path, **over), "--out", out) == 1
    assert field in capsys.readouterr().err
    assert not out.exists()


def test_train_numeric_failure_exit_code(tmp_path):
    cfg = tiny_train_config(tmp_path, learning_rate=1e308, kl_beta=0.0)
    assert run("train", "--config", cfg, "--out", tmp_path / "run") == 3


def test_sweep_and_report(tmp_path, instances):
    run_dir = tmp_path / "run"
    assert run("train", "--config", tiny_train_config(tmp_path), "--out", run_dir) == 0
    curve = run_dir / "curve.csv"
    assert run("sweep", "--policy", run_dir / "policy.json", "--eval", instances, "--budgets", "0:250:25",
               "--out", curve) == 0
    rows = list(csv.DictReader(curve.open()))
    assert len(rows) == 11
    assert (run_dir / "curve.csv.manifest.json").exists()
    assert main(["report", str(run_dir), "--json"]) == 0


def test_report_numbers_match_raw_files(tmp_path, instances, capsys):
    run_dir = tmp_path / "run"
    run("train", "--config", tiny_train_config(tmp_path), "--out", run_dir)
    run("sweep", "--policy", run_dir / "policy.json", "--eval", instances, "--budgets", "0:64:8",
        "--out", run_dir / "curve.csv")
    capsys.readouterr()
    assert run("report", run_dir, "--json") == 0
    summary = json.loads(capsys.readouterr().out)
    log = list(csv.DictReader((run_dir / "log.csv").open()))
    assert summary["train"]["final_accuracy"] == float(log[-1]["accuracy"])
    last = json.loads((run_dir / "log.jsonl").read_text().splitlines()[-1])
    assert summary["train"]["final_agreement"] == last["agreement"]
    curve = list(csv.DictReader((run_dir / "curve.csv").open()))
    accs = [float(r["accuracy"]) for r in curve]
    best = max(range(len(accs)), key=lambda i: (accs[i], -i))
    assert summary["sweep"]["curve.csv"]["sweet_spot"] == int(curve[best]["budget"])
    assert run("report", run_dir) == 0
    assert "L_sweet" in capsys.readouterr().out


def test_report_errors(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run("report", empty) != 0
    assert run("report", tmp_path / "missing") != 0


def test_judge_matches_fixture(tmp_path):
    out = tmp_path / "judge"
    assert run("judge", "--instances", FIXTURES / "golden_instances.jsonl", "--a", FIXTURES / "judge_a.jsonl",
               "--b", FIXTURES / "judge_b.jsonl", "--mock", "--out", out) == 0
    assert (out / "records.jsonl").read_bytes() == (FIXTURES / "judge_expected_records.jsonl").read_bytes()
    assert (out / "summary.json").read_bytes() == (FIXTURES / "judge_expected_summary.json").read_bytes()
    assert read_json(out / "manifest.json")["command"] == "judge"


def test_judge_fixture_agrees_with_reference_scorer():
    insts = {json.loads(l)["id"]: json.loads(l) for l in (FIXTURES / "golden_instances.jsonl").open()}
    a = [json.loads(l) for l in (FIXTURES / "judge_a.jsonl").open()]
    b = {json.loads(l)["instance_id"]: json.loads(l)["raw"] for l in (FIXTURES / "judge_b.jsonl").open()}
    expected = []
    for row in a:
        inst = insts[row["instance_id"]]
        d = reference_scorer.score(row["raw"], inst)["total"] - reference_scorer.score(b[row["instance_id"]], inst)["total"]
        expected.append("Tie" if d == 0 else ("A" if d > 0 else "B"))
    got = [json.loads(l)["verdict"] for l in (FIXTURES / "judge_expected_records.jsonl").open()]
    assert got == expected


def test_judge_requires_mock(tmp_path):
    assert run("judge", "--instances", FIXTURES / "golden_instances.jsonl", "--a", FIXTURES / "judge_a.jsonl",
               "--b", FIXTURES / "judge_b.jsonl", "--out", tmp_path / "j") == 1


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 1
    with pytest.raises(SystemExit) as err:
        main(["sweep", "--policy", "x"])
    assert err.value.code == 1


def test_sample_respects_budget(tmp_path, instances):
    pol = tmp_path / "p.json"
    pol.write_text(json.dumps({}))
    out = tmp_path / "s.jsonl"
    assert run("sample", "--policy", pol, "--eval", instances, "--budget", 4, "--out", out) == 0
    from procrl.traces import parse_trace
    for line in out.open():
        assert len(parse_trace(json.loads(line)["raw"]).think.split()) <= 4
