import pytest
from hypothesis import given, settings, strategies as st

from mboxverify.core import Universe, Packet, Trace, flow_of, reverse
from mboxverify.mbx import (FixedOracle, MapLookupMiss, ParseError, SemanticError, axiom_templates,
                            builtin, fail_state, initial_state, instantiate, parse_model, recover_state, step)
from mboxverify.mbx.library import SOURCES

FW = instantiate("fw", builtin("learning_firewall"), {"acl": [("a", "b")]})


U = Universe(("a", "b", "h", "x", "y", "N"), ("1", "2", "7"))


def run(inst, packets, oracle=None):
    st_ = initial_state(inst.model)
    outs = []
    for p in packets:
        r = step(inst, st_, p, oracle or FixedOracle(), U)
        st_ = r.state
        outs.append(r.outputs)
    return st_, outs


@pytest.mark.parametrize("name", sorted(SOURCES))
def test_builtins_parse_and_roundtrip(name):
    m = builtin(name)
    assert m.name == name
    assert parse_model(SOURCES[name]) == m


def test_firewall_hole_punching():
    out_p = Packet("a", "b", "1", "2")
    st_, outs = run(FW, [reverse(out_p), out_p, reverse(out_p)])
    assert outs == [(), (out_p,), (reverse(out_p),)]
    assert st_.register(FW.model, "established") == frozenset({flow_of(out_p)})


def test_firewall_fail_closed_and_recover_clears():
    p = Packet("a", "b", "1", "1")
    st_, _ = run(FW, [p])
    dead = fail_state(FW.model)
    assert step(FW, dead, p, FixedOracle()).outputs == ()
    back = recover_state(dead)
    assert not back.failed and back.is_empty
    assert st_.register(FW.model, "established")


def test_nat_translates_and_reverses():
    nat = instantiate("n", builtin("nat"), {"nat_address": "N"})
    out = Packet("h", "x", "1", "1")
    orc = FixedOracle({("n", "remapped_port", (out,)): "7"})
    st_, outs = run(nat, [out], orc)
    (q,), = outs
    assert (q.src, q.src_port, q.origin) == ("N", "7", "h")
    back = step(nat, st_, reverse(q), orc, U).outputs
    assert back == (reverse(out).with_fields(origin="h"),)
    # a packet from an endpoint the mapping was not made for is not translated back
    stranger = Packet("y", "N", "1", "7")
    orc2 = FixedOracle(default=lambda *a: "2")
    assert all(o.dst != "h" for o in step(nat, st_, stranger, orc2, U).outputs)


@given(st.lists(st.tuples(st.sampled_from("ab"), st.sampled_from("ab"), st.sampled_from("12")), max_size=6))
@settings(max_examples=60)
def test_firewall_state_only_grows_with_acl_flows(hist):
    pkts = [Packet(s, d, pt, "1") for s, d, pt in hist if s != d]
    st_, outs = run(FW, pkts)
    est = st_.register(FW.model, "established")
    assert all(fl.addresses == {"a", "b"} for fl in est)
    for p, o in zip(pkts, outs):
        assert o in ((), (p,))


def test_map_lookup_miss_raises():
    m = parse_model("""
model bad() {
  state tbl: Map[Address, Address]
  otherwise => {
    p.dst := tbl[p.dst]
    forward(p)
  }
}""")
    with pytest.raises(MapLookupMiss):
        step(instantiate("b", m, {}), initial_state(m), Packet("a", "b", "1", "1"), FixedOracle())


def test_parse_error_position():
    with pytest.raises(ParseError) as e:
        parse_model("model m() {\n  when => { drop }\n}")
    assert e.value.line == 2


def test_unknown_register_is_semantic_error():
    with pytest.raises(SemanticError) as e:
        parse_model("model m() {\n  when nope.contains(p.src) => { drop }\n  otherwise => { drop }\n}")
    assert e.value.symbol == "nope"


def test_config_checked():
    with pytest.raises(ValueError):
        instantiate("fw", builtin("learning_firewall"), {})


# -- axiom templates ----------------------------------------------------------

def test_axiom_templates_render():
    ax = {a.name: a for a in axiom_templates(FW)}
    assert set(ax) == {"state[fw.established]", "send[fw]"}
    txt = ax["state[fw.established]"].text
    assert "established_fw(x)" in txt and "acl_fw" in txt and "¬fail(fw)" in txt


def test_nat_send_axiom_mentions_rewrite():
    nat = instantiate("n1", builtin("nat"), {"nat_address": "N"})
    send = [a for a in axiom_templates(nat) if a.kind == "send"][0]
    assert "src = nat_address_n1" in send.text


def test_axiom_evaluators_on_real_and_tampered_traces():
    from mboxverify.bmc import Bounds, explore
    from mboxverify.scenarios import load_scenario
    from mboxverify.slicer import build_slice, restrict

    s = load_scenario("enterprise", subnets=3, delete_rule=1)
    inv = [i for i in s.invariants if i.name.startswith("quarantine-out")][0]
    net = restrict(s.net, build_slice(s.net, inv))
    v = explore(net, inv, Bounds(depth=8))
    assert v.kind == "violated"
    for inst in net.middleboxes:
        for ax in axiom_templates(inst):
            assert ax.holds_on(v.trace, net), ax.name
    # forge a state with an unexplained register entry
    fw = [m for m in net.middleboxes if m.type_name == "learning_firewall"][0]
    ghost = flow_of(Packet("zz", "yy", "1", "1"))
    regs = list(v.trace.registers)
    st_ = dict(regs[-1])
    bad = {**st_, fw.id: type(st_[fw.id])((st_[fw.id].regs[0] | {ghost},) + st_[fw.id].regs[1:],
                                          st_[fw.id].failed)}
    regs[-1] = tuple(bad.items()) if isinstance(regs[-1], tuple) else bad
    forged = Trace(v.trace.events, tuple(regs), v.trace.bindings)
    state_ax = [a for a in axiom_templates(fw) if a.kind == "state"][0]
    assert not state_ax.holds_on(forged, net)
