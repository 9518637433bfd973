import dataclasses
import shutil
import sys

import pytest
from hypothesis import given, strategies as st

from mboxverify.bmc import Bounds, explore, replay
from mboxverify.core import validate_trace
from mboxverify.scenarios import load_scenario
from mboxverify.slicer import build_slice, restrict
from mboxverify.smt import (ModelIncomplete, RestrictionViolated, Sat, SolverError, SolverUnknown, Unsat,
                            check_restrictions, decode_trace, default_command, encode_bounded, encode_causal,
                            parse_values, run_solver)
from mboxverify.smt import terms as T

needs_solver = pytest.mark.skipif(default_command() is None, reason="no SMT-LIB2 solver on PATH")
PY = sys.executable


def ent(delete_rule=1):
    s = load_scenario("enterprise", subnets=3, delete_rule=delete_rule)
    inv = s.invariants[0]
    return restrict(s.net, build_slice(s.net, inv)), inv


# -- terms ----------------------------------------------------------------------

bools = st.sampled_from(["a", "b", "(not c)", T.TRUE, T.FALSE])


@given(st.lists(bools, max_size=5))
def test_and_or_fold(xs):
    a, o = T.and_(*xs), T.or_(*xs)
    if T.FALSE in xs:
        assert a == T.FALSE
    if T.TRUE in xs:
        assert o == T.TRUE
    if not xs:
        assert (a, o) == (T.TRUE, T.FALSE)


@given(st.integers(-50, 50), st.integers(-50, 50))
def test_eq_int_folds_numerals(i, j):
    assert T.eq_int(T.num(i), T.num(j)) == (T.TRUE if i == j else T.FALSE)


def test_count_shortcuts():
    assert T.count(["a", "b"], 2) == T.TRUE
    assert T.count(["a", "b"], 0) == "(and (not a) (not b))"
    assert T.count(["a", "b", "c"], 1).startswith("(<= (+")


def test_parse_values_negative_and_bool():
    m = parse_values("((x (- 2)) (y 3))\n((z true) (|w q| false))")
    assert m == {"x": -2, "y": 3, "z": True, "w q": False}
    with pytest.raises(SolverError):
        parse_values("((x (f 1)))")


# -- scripts ---------------------------------------------------------------------

def test_script_is_deterministic():
    net, inv = ent()
    a = encode_bounded(net, inv, 4)
    b = encode_bounded(net, inv, 4)
    assert a.text == b.text
    assert a.text.startswith("(set-logic QF_UFLIA)")
    assert "(check-sat)" in a.text and "; state[" in a.text


def test_causal_script_shape():
    net, inv = ent()
    txt = encode_causal(net, inv).text
    assert "(declare-sort Event 0)" in txt and "(check-sat)" in txt


def test_causal_restrictions():
    s = load_scenario("redundant", break_backup=True)
    with pytest.raises(RestrictionViolated) as e:
        check_restrictions(s.net, s.invariants[0], budget=1)
    assert e.value.criterion == "failure-free"
    s = load_scenario("random_mixed", seed=1)
    assert [m.type_name for m in s.net.middleboxes] == ["nat"]
    with pytest.raises(RestrictionViolated) as e:
        check_restrictions(s.net, dataclasses.replace(s.invariants[0], max_failures=0))
    assert e.value.criterion == "supported-state"


# -- solver plumbing (fake solvers) ------------------------------------------------

def test_timeout_gives_unknown():
    out = run_solver("(check-sat)", f"{PY} -c 'import time; time.sleep(5)'", timeout=0.3)
    assert isinstance(out, SolverUnknown) and "timeout" in out.reason


def test_garbage_output_raises():
    with pytest.raises(SolverError):
        run_solver("(check-sat)", f"{PY} -c 'print(\"segfault\")'")


def test_missing_binary_raises():
    with pytest.raises(SolverError):
        run_solver("(check-sat)", "/nonexistent/solver")


def test_file_template(tmp_path):
    out = run_solver("(check-sat)", f"{PY} -c 'import sys; print(\"unsat\" if open(sys.argv[1]).read() else \"x\")' {{file}}")
    assert isinstance(out, Unsat)


def test_env_var_overrides(monkeypatch):
    monkeypatch.setenv("MBOXVERIFY_SOLVER", "mysolver --in")
    assert default_command() == "mysolver --in"


# -- with a real solver -------------------------------------------------------------

@needs_solver
def test_k1_is_unsat():
    net, inv = ent()
    assert isinstance(run_solver(encode_bounded(net, inv, 1).text), Unsat)


@needs_solver
def test_sat_model_decodes_and_replays():
    net, inv = ent()
    script = encode_bounded(net, inv, 6)
    out = run_solver(script.text)
    assert isinstance(out, Sat)
    tr = decode_trace(out, net, inv, script)
    assert validate_trace(tr, net) == []
    assert replay(net, tr, inv)
    assert explore(net, inv, Bounds(depth=6)).kind == "violated"


@needs_solver
def test_truncated_model_is_incomplete():
    net, inv = ent()
    script = encode_bounded(net, inv, 6)
    out = run_solver(script.text)
    keep = dict(list(out.model.items())[: len(out.model) // 3])
    with pytest.raises(ModelIncomplete):
        decode_trace(keep, net, inv, script)


@needs_solver
def test_correct_config_unsat_both_modes():
    net, inv = ent(delete_rule=0)
    assert isinstance(run_solver(encode_bounded(net, inv, 6).text), Unsat)
    assert isinstance(run_solver(encode_causal(net, inv).text), Unsat)


@needs_solver
def test_failure_counterexample_has_fail_event():
    s = load_scenario("redundant", break_backup=True)
    inv = dataclasses.replace(s.invariants[0], max_failures=1)
    script = encode_bounded(s.net, inv, 6, Bounds(depth=6, budget=1))
    out = run_solver(script.text)
    assert isinstance(out, Sat)
    tr = decode_trace(out, s.net, inv, script)
    assert tr.failures and replay(s.net, tr, inv)
