import json

import pytest

from mboxverify import cli
from mboxverify.bmc import replay, trace_from_json
from mboxverify.core import validate_trace
from mboxverify.invariants import load_invariants
from mboxverify.network import load_network


def gen(tmp_path, name, *params):
    out = tmp_path / name
    assert cli.main(["gen", name, *params, "--out", str(out)]) == 0
    return out


def verify(d, *extra):
    return cli.main(["verify", "--network", str(d / "network.json"),
                     "--invariants", str(d / "invariants.json"), *extra])


def test_enterprise_correct_exits_zero(tmp_path, capsys):
    d = gen(tmp_path, "enterprise", "subnets=3")
    capsys.readouterr()
    assert verify(d, "--json") == 0
    rep = json.loads(capsys.readouterr().out)
    assert len(rep["groups"]) == 3
    assert rep["summary"] == {"holds": 3, "violated": 0, "unknown": 0}


def test_deleted_rule_exits_one_with_replaying_cex(tmp_path, capsys):
    d = gen(tmp_path, "enterprise", "subnets=3", "delete_rule=1")
    assert verify(d, "--out", str(tmp_path / "o")) == 1
    net = load_network(d / "network.json")
    invs = {i.name: i for i in load_invariants(d / "invariants.json", net)}
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    cexs = [r for r in rep["invariants"] if r["counterexample"]]
    assert cexs
    for r in cexs:
        tr = trace_from_json(json.loads(open(r["counterexample"]).read()))
        assert validate_trace(tr, net) == []
        assert replay(net, tr, invs[r["name"]])


def test_smt_without_solver_is_actionable(tmp_path, monkeypatch, capsys):
    d = gen(tmp_path, "enterprise")
    monkeypatch.setattr("mboxverify.smt.default_command", lambda: None)
    code = verify(d, "--engine", "smt-bounded")
    assert code >= 3
    err = capsys.readouterr().err
    assert "--solver-cmd" in err and "MBOXVERIFY_SOLVER" in err


def test_report_complete_and_deterministic(tmp_path):
    d = gen(tmp_path, "multi_tenant", "tenants=4")
    net = load_network(d / "network.json")
    invs = load_invariants(d / "invariants.json", net)
    r1 = cli.verify(net, invs, cli.RunConfig(depth=4))
    r2 = cli.verify(net, invs, cli.RunConfig(depth=4, jobs=2))
    assert sum(len(m) for _, m in r1.groups) == len(invs)
    assert [r.name for r in r1.results] == [i.name for i in invs]
    a = json.dumps(r1.to_json(timing=False), sort_keys=True)
    assert a == json.dumps(r2.to_json(timing=False), sort_keys=True)


def test_no_symmetry_verifies_each(tmp_path):
    d = gen(tmp_path, "enterprise", "subnets=3")
    net = load_network(d / "network.json")
    invs = load_invariants(d / "invariants.json", net)
    r = cli.verify(net, invs, cli.RunConfig(depth=3, symmetry=False, slicing=False))
    assert len(r.groups) == len(invs)
    assert all(x.slice_rule == "full" for x in r.results)


def test_budget_flag(tmp_path):
    d = gen(tmp_path, "redundant", "break_backup=true")
    assert verify(d, "--max-failures", "0") == 0
    assert verify(d, "--max-failures", "1") == 1


def test_general_fallback_warns(tmp_path, capsys):
    d = gen(tmp_path, "datacenter")
    nd = json.loads((d / "network.json").read_text())
    for m in nd["middleboxes"]:
        m["class_hint"] = "general"
    (d / "network.json").write_text(json.dumps(nd))
    capsys.readouterr()
    code = verify(d, "--json", "--depth", "4")
    rep = json.loads(capsys.readouterr().out)
    assert code in (0, 1)
    assert rep["warnings"] and all(r["slice"]["rule"] == "full" for r in rep["invariants"])


def test_schema_error_exit_three(tmp_path, capsys):
    d = gen(tmp_path, "enterprise")
    (d / "invariants.json").write_text(json.dumps([{"name": "x", "type": "simple-isolation", "target": "h"}]))
    assert verify(d) == 3
    assert "/0" in capsys.readouterr().err


def test_bad_gen_param(tmp_path, capsys):
    assert cli.main(["gen", "enterprise", "frobs=3", "--out", str(tmp_path)]) == 3


def test_classify_builtin(capsys):
    assert cli.main(["classify", "--model", "learning_firewall", "--json"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["class"] == "flow-parallel" and d["provenance"] == "declared"


def test_encode_writes_scripts(tmp_path):
    d = gen(tmp_path, "enterprise")
    out = tmp_path / "q.smt2"
    argv = ["encode", "--network", str(d / "network.json"), "--invariants", str(d / "invariants.json"),
            "--depth", "3", "--out", str(out)]
    assert cli.main(argv) == 0
    files = sorted(tmp_path.glob("q.*.smt2"))
    assert len(files) == 3 and all(f.read_text().startswith("(set-logic") for f in files)
    assert cli.main(argv[:-2] + ["--mode", "causal", "--invariant", "private-h1", "--out", str(out)]) == 0
    assert "declare-sort" in out.read_text()


def test_runconfig_validation():
    with pytest.raises(ValueError):
        cli.RunConfig(engine="magic")
    with pytest.raises(ValueError):
        cli.RunConfig(jobs=0)
