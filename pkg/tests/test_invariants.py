import json

import pytest
from hypothesis import given, strategies as st

from mboxverify.core import HostEmit, Packet, Recv, Trace, flow_of
from mboxverify.invariants import (DeliveryCtx, NotTraversed, PNot, SrcEquals,
                                   data_isolation, evaluate, flow_isolation, invariant_from_json,
                                   invariants_from_json, load_invariants, negate, simple_isolation,
                                   symmetry_groups, traversal, violates)
from mboxverify.network import NetworkError
from mboxverify.scenarios import load_scenario
from mboxverify.slicer import policy_partition

addr = st.sampled_from(["a", "b", "c"])
pkts = st.builds(Packet, addr, addr, st.sampled_from("12"), st.sampled_from("12"), addr)


@given(pkts)
def test_double_negation(p):
    ctx = DeliveryCtx()
    assert evaluate(PNot(PNot(SrcEquals("a"))), p, ctx) == evaluate(SrcEquals("a"), p, ctx)


@given(pkts, st.booleans())
def test_flow_isolation_respects_prior_outbound(p, sent):
    inv = flow_isolation("f", "B", p.src)
    ctx = DeliveryCtx(frozenset({flow_of(p)}) if sent else frozenset())
    assert evaluate(inv.predicate, p, ctx) == (not sent)


def test_traversal_matches_by_id_or_type():
    pred = NotTraversed("idps")
    ctx = DeliveryCtx(path=("fw1", "ids7"), types={"fw1": "learning_firewall", "ids7": "idps"})
    assert not evaluate(pred, Packet("a", "b", "1", "1"), ctx)
    assert evaluate(pred, Packet("a", "b", "1", "1"), DeliveryCtx(path=("fw1",)))


def _t(*evs):
    return Trace(tuple(evs))


def test_violates_on_delivery_only():
    p = Packet("a", "b", "1", "1")
    inv = simple_isolation("s", "B", "a")
    assert not violates(_t(HostEmit(0, "A", p, "B")), inv)
    assert violates(_t(HostEmit(0, "A", p, "B"), Recv(1, "B", "A", p)), inv)
    assert negate(inv).first_violation(_t(HostEmit(0, "A", p, "B"), Recv(1, "B", "A", p))) == 1


def test_flow_isolation_trace_context():
    out = Packet("b", "a", "1", "1")
    back = Packet("a", "b", "1", "1")
    inv = flow_isolation("f", "B", "a")
    tr = _t(HostEmit(0, "B", out, "A"), Recv(1, "A", "B", out), HostEmit(2, "A", back, "B"), Recv(3, "B", "A", back))
    assert not violates(tr, inv)
    assert violates(_t(HostEmit(0, "A", back, "B"), Recv(1, "B", "A", back)), inv)


@pytest.mark.parametrize("inv", [
    simple_isolation("s", "B", "a", 1), flow_isolation("f", "B", "a"),
    data_isolation("d", "B", "a"), traversal("t", "B", "idps"), traversal("t2", "B", "fw", src="a"),
])
def test_json_roundtrip(inv):
    assert invariant_from_json(inv.to_json()) == inv


def test_loader_pointer_errors(tmp_path):
    s = load_scenario("enterprise")
    good = list(s.invariants_json)
    assert len(invariants_from_json(good, s.net)) == len(good)
    cases = [
        ([{"name": "x", "type": "traversal", "target": good[0]["target"]}], "/0"),
        ([good[0], good[0]], "/1/name"),
        ([{**good[0], "target": "nowhere"}], "/0"),
        ([{**good[0], "max_failures": -1}], "/0/max_failures"),
    ]
    for data, ptr in cases:
        with pytest.raises(NetworkError) as e:
            invariants_from_json(data, s.net)
        assert e.value.pointer == ptr, data
    f = tmp_path / "i.json"
    f.write_text(json.dumps(good))
    assert load_invariants(f, s.net)[0].name == good[0]["name"]


def test_text_rendering():
    assert simple_isolation("s", "B", "a").text.startswith("∀n, p: □¬(rcv(B, n, p)")
    assert "snd(B, _, p') ∧ flow(p') = flow(p)" in flow_isolation("f", "B", "a").text
    assert traversal("t", "B", "idps").text.endswith("¬traversed(p, idps))")


@pytest.mark.parametrize("tenants", [4, 8])
def test_symmetry_groups_partition_the_input(tenants):
    s = load_scenario("multi_tenant", tenants=tenants)
    groups = symmetry_groups(list(s.invariants), policy_partition(s.net), s.net)
    names = [m.name for g in groups for m in g.members]
    assert sorted(names) == sorted(i.name for i in s.invariants)
    for g in groups:
        assert g.representative in g.members
        assert len(g.bijections) == g.size
        for bij in g.bijections:
            rep_nodes = [a for a, _ in bij]
            assert len(set(rep_nodes)) == len(rep_nodes)


def test_symmetry_separates_types():
    s = load_scenario("enterprise")
    groups = symmetry_groups(list(s.invariants), policy_partition(s.net), s.net)
    for g in groups:
        assert len({m.type for m in g.members}) == 1
