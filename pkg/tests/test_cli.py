import json
import subprocess
import sys

import pytest

from libblank.cli import main
from libblank.predictor import dumps, loads

SPEC = {"name": "cli", "seed": 5, "n_sites": 5, "n_lib_functions": 40, "n_entries": 3,
        "attacks": [{"kind": "tamper", "count": 1}]}


@pytest.fixture(scope="module")
def scen(tmp_path_factory):
    d = tmp_path_factory.mktemp("scen")
    (d / "spec.json").write_text(json.dumps(SPEC))
    assert main(["gen", "--spec", str(d / "spec.json"), "--out", str(d)]) == 0
    return d


def stages(d, out, extra=()):
    assert main(["plan", "--program", str(d / "program.json"), "--out", str(out / "plan.json")]) == 0
    assert main(["profile", "--program", str(d / "program.json"), "--plan", str(out / "plan.json"),
                 "--trace", str(d / "trace.small.jsonl"), "--trace", str(d / "trace.medium.jsonl"),
                 "--out", str(out / "train.csv"), "--chains", str(out / "chains.json")]) == 0
    assert main(["train", "--csv", str(out / "train.csv"), "--out", str(out / "tree.txt")]) == 0
    assert main(["simulate", "--program", str(d / "program.json"), "--plan", str(out / "plan.json"),
                 "--model", str(out / "tree.txt"), "--trace", str(d / "trace.large.jsonl"),
                 "--chains", str(out / "chains.json"), "--oracle", str(d / "oracle.json"),
                 "--report", str(out / "sim.json"), "--events", str(out / "events.jsonl"),
                 *extra]) == 0


def test_gen_writes_scenario(scen):
    for name in ("program.json", "oracle.json", "cve.json", "scenario.json",
                 "trace.small.jsonl", "trace.medium.jsonl", "trace.large.jsonl"):
        assert (scen / name).exists()


def test_gen_builtin(tmp_path):
    assert main(["gen", "--scenario", "suite-01", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "program.json").exists()


def test_full_stage_chain_and_report(scen, tmp_path):
    stages(scen, tmp_path)
    sim = json.loads((tmp_path / "sim.json").read_text())
    assert sim["invariant_violations"] == 0 and sim["attacks_detected"] >= 1
    assert main(["report", "--name", "cli", "--program", str(scen / "program.json"),
                 "--events", str(tmp_path / "events.jsonl"), "--simulation",
                 str(tmp_path / "sim.json"), "--cve", str(scen / "cve.json"),
                 "--out", str(tmp_path / "r.json"), "--csv", str(tmp_path / "r.csv")]) == 0
    row = json.loads((tmp_path / "r.json").read_text())["benchmarks"][0]
    assert row["benchmark"] == "cli" and 0 <= row["reduction"] <= 100
    assert (tmp_path / "r.csv").read_text().startswith("benchmark,reduction")


def test_simulate_is_byte_identical(scen, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    stages(scen, a)
    stages(scen, b)
    for f in ("plan.json", "train.csv", "chains.json", "tree.txt", "sim.json", "events.jsonl"):
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_fullchain_and_eager_modes(scen, tmp_path):
    stages(scen, tmp_path, ["--mode", "fullchain", "--lazy-blanking", "off"])
    sim = json.loads((tmp_path / "sim.json").read_text())
    assert sim["mode"] == "fullchain" and sim["c_max"] <= 1


def test_train_output_round_trips(scen, tmp_path):
    stages(scen, tmp_path)
    text = (tmp_path / "tree.txt").read_text()
    assert dumps(loads(text)) == text


def test_divergence_prints_table(scen, tmp_path, capsys):
    assert main(["divergence", "--program", str(scen / "program.json"),
                 "--out", str(tmp_path / "d.json")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("#Divergent\t#Non-divergent\n")
    doc = json.loads((tmp_path / "d.json").read_text())
    assert sum(doc["counts"].values()) == len(doc["classification"])


def err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_exit_codes(scen, tmp_path, capsys):
    assert main([]) == 2
    assert main(["train", "--csv", "x.csv", "--depth", "0", "--out", "t"]) == 2
    capsys.readouterr()
    assert main(["plan", "--program", str(tmp_path / "nope.json"), "--out", "p"]) == 3
    assert err(capsys)["error"] == "missing_file"
    (tmp_path / "bad.json").write_text("{")
    assert main(["plan", "--program", str(tmp_path / "bad.json"), "--out", "p"]) == 4
    assert err(capsys)["error"] == "schema"
    prog = {"functions": [{"id": 0, "name": "m", "entry_block": 0, "is_library": False,
                           "blocks": [{"id": 0, "instrs": [
                               {"op": "call", "site": 1, "callee": 9, "args": []}],
                               "succs": []}]}]}
    (tmp_path / "ids.json").write_text(json.dumps(prog))
    assert main(["plan", "--program", str(tmp_path / "ids.json"), "--out",
                 str(tmp_path / "p.json")]) == 5
    assert err(capsys)["error"] == "inconsistent_ids"
    stages(scen, tmp_path)
    (tmp_path / "broken.jsonl").write_text('{"ev":"enter","fn":1000}\n')
    assert main(["simulate", "--program", str(scen / "program.json"), "--plan",
                 str(tmp_path / "plan.json"), "--model", str(tmp_path / "tree.txt"),
                 "--trace", str(tmp_path / "broken.jsonl"), "--chains",
                 str(tmp_path / "chains.json"), "--report", str(tmp_path / "s.json")]) == 6
    assert err(capsys)["error"] == "trace"
    (tmp_path / "bad_tree.txt").write_text("dtree v1 depth=3 nodes=1\nQ\n")
    assert main(["simulate", "--program", str(scen / "program.json"), "--plan",
                 str(tmp_path / "plan.json"), "--model", str(tmp_path / "bad_tree.txt"),
                 "--trace", str(scen / "trace.large.jsonl"), "--chains",
                 str(tmp_path / "chains.json"), "--report", str(tmp_path / "s.json")]) == 4
    assert "line 2" in err(capsys)["message"]


def write_config(tmp_path, **extra):
    cfg = {"out_dir": "out", "scenarios": [SPEC, "attacks"], **extra}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_pipeline_deterministic_across_jobs(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    a.mkdir()
    b.mkdir()
    assert main(["pipeline", "--config", str(write_config(a))]) == 0
    assert main(["pipeline", "--config", str(write_config(b)), "--jobs", "2"]) == 0
    for f in ("report.json", "report.csv"):
        assert (a / "out" / f).read_bytes() == (b / "out" / f).read_bytes()
    rows = json.loads((a / "out" / "report.json").read_text())["benchmarks"]
    assert [r["benchmark"] for r in rows] == ["attacks", "cli"]
    assert (a / "out" / "cli" / "tree.txt").exists()


def test_pipeline_with_file_benchmark(scen, tmp_path):
    cfg = {"out_dir": "o", "benchmarks": [{
        "name": "files", "program": str(scen / "program.json"),
        "train": [str(scen / "trace.small.jsonl")], "test": str(scen / "trace.large.jsonl"),
        "oracle": str(scen / "oracle.json"), "cve": str(scen / "cve.json")}]}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert main(["pipeline", "--config", str(path)]) == 0
    assert (tmp_path / "o" / "report.csv").exists()


@pytest.mark.parametrize("cfg,code", [
    ({"scenarios": ["suite-01"]}, 4),
    ({"out_dir": "o", "scenarios": ["no-such"]}, 4),
    ({"out_dir": "o", "scenarios": ["suite-01"], "colour": 1}, 4),
    ({"out_dir": "o"}, 4),
    ({"out_dir": "o", "scenarios": ["suite-01", "suite-01"]}, 4),
    ({"out_dir": "o", "benchmarks": [{"name": "x", "program": "missing.json",
                                      "train": [], "test": "t"}]}, 3),
    ({"out_dir": "o", "scenarios": ["suite-01"], "mode": "bogus"}, 4),
])
def test_pipeline_config_errors(tmp_path, cfg, code):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert main(["pipeline", "--config", str(path)]) == code


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "libblank", "--help"], capture_output=True,
                         text=True)
    assert out.returncode == 0 and "Exit codes" in out.stdout
    ver = subprocess.run([sys.executable, "-m", "libblank", "--version"], capture_output=True,
                         text=True)
    assert ver.stdout.strip().endswith("0.1.0")
