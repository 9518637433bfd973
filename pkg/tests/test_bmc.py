import dataclasses

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from mboxverify.bmc import (Bounds, TraceDiverges, explore, explore_stats, naive_violations, replay,
                            trace_from_json, trace_to_json)
from mboxverify.core import Recv, Trace, validate_trace
from mboxverify.invariants import violates
from mboxverify.scenarios import load_scenario
from mboxverify.slicer import build_slice, restrict


def sliced(name, inv_index=0, **kw):
    s = load_scenario(name, **kw)
    inv = s.invariants[inv_index]
    return restrict(s.net, build_slice(s.net, inv)), inv


def test_bounds_validation():
    with pytest.raises(ValueError):
        Bounds(depth=-1)
    with pytest.raises(ValueError):
        Bounds(budget=-2)


def test_depth_zero_holds():
    net, inv = sliced("enterprise", delete_rule=1)
    assert explore(net, inv, Bounds(depth=0)).kind == "holds"


def test_counterexample_is_wellformed_and_replays():
    net, inv = sliced("enterprise", delete_rule=1)
    v = explore(net, inv, Bounds(depth=8))
    assert v.kind == "violated"
    assert validate_trace(v.trace, net) == []
    assert replay(net, v.trace, inv)
    assert violates(v.trace, inv, net)
    assert isinstance(v.trace.events[-1], Recv) and v.trace.events[-1].at == inv.target


def test_trace_json_roundtrip():
    net, inv = sliced("enterprise", delete_rule=1)
    t = explore(net, inv, Bounds(depth=8)).trace
    back = trace_from_json(trace_to_json(t))
    assert back.events == t.events and back.bindings == t.bindings
    assert replay(net, back, inv)


def test_tampered_trace_diverges():
    net, inv = sliced("enterprise", delete_rule=1)
    t = explore(net, inv, Bounds(depth=8)).trace
    last = t.events[-1]
    bad = dataclasses.replace(last, sent=((last.packet, "nowhere"),))
    with pytest.raises(TraceDiverges):
        replay(net, Trace(t.events[:-1] + (bad,), (), t.bindings), inv)


def test_failure_budget_gates_redundant_violation():
    s = load_scenario("redundant", break_backup=True)
    inv = s.invariants[0]
    assert explore(s.net, inv, Bounds(depth=8, budget=0)).kind == "holds"
    v = explore(s.net, inv, Bounds(depth=8, budget=1))
    assert v.kind == "violated" and v.trace.failures


def test_node_cap_yields_unknown():
    s = load_scenario("redundant", break_backup=True)
    v = explore(s.net, s.invariants[0], Bounds(depth=8, budget=1, node_cap=3))
    assert v.kind == "unknown"


def test_search_is_deterministic():
    net, inv = sliced("enterprise", delete_rule=1)
    a, n1 = explore_stats(net, inv, Bounds(depth=8))
    b, n2 = explore_stats(net, inv, Bounds(depth=8))
    assert a == b and n1 == n2


@given(st.integers(0, 10_000))
@settings(max_examples=12, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_explore_agrees_with_brute_force(seed):
    s = load_scenario("random_flow_parallel", seed=seed, max_nodes=4)
    inv = s.invariants[0]
    b = Bounds(depth=3, max_emits=1)
    assert (explore(s.net, inv, b).kind == "violated") == naive_violations(s.net, inv, b)


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_more_depth_never_loses_a_violation(seed):
    s = load_scenario("random_flow_parallel", seed=seed)
    inv = s.invariants[0]
    small = explore(s.net, inv, Bounds(depth=3, max_emits=2)).kind
    big = explore(s.net, inv, Bounds(depth=5, max_emits=2)).kind
    if small == "violated":
        assert big == "violated"
