import pytest
from hypothesis import given, settings, strategies as st

from mboxverify.bmc import Bounds, explore
from mboxverify.mbx import builtin, parse_model
from mboxverify.scenarios import load_scenario
from mboxverify.slicer import (ClassifyBounds, GeneralMiddleboxPresent, build_slice, check_slice_equivalence,
                               check_state_class, classify_state_class, hash_flow, instance_class,
                               naive_slice, policy_partition, restrict)
from mboxverify.core import Packet, flow_of, reverse

FAST = ClassifyBounds(addresses=3, ports=1, history=2, configs=2)

COUNTER = """
model counter() {
  state seen: Set[Address]
  when seen.contains(p.dst) => { drop }
  otherwise => {
    seen += p.dst
    forward(p)
  }
}
"""


def test_acl_firewall_flow_parallel_fast():
    kind, witness, _ = check_state_class(builtin("acl_firewall"), FAST)
    assert kind == "flow-parallel" and witness is None


def test_shared_state_model_is_refuted_with_witness():
    sc = classify_state_class(parse_model(COUNTER), FAST)
    assert sc.kind != "flow-parallel"
    assert sc.provenance == "refuted"
    w = sc.witness
    assert w.full != w.restricted
    assert w.history


def test_declared_tag_wins_and_mismatch_is_reported():
    sc = classify_state_class(builtin("idps"), FAST)
    assert sc.kind == "origin-agnostic" and sc.provenance == "declared"
    assert sc.checked == "general" and sc.mismatch


def test_declared_tag_without_check():
    sc = classify_state_class(builtin("nat"), check=False)
    assert (sc.kind, sc.checked, sc.witness) == ("flow-parallel", None, None)


@given(st.sampled_from("abc"), st.sampled_from("12"), st.sampled_from("abc"), st.sampled_from("12"))
def test_hash_flow_direction_free(a, pa, b, pb):
    p = Packet(a, b, pa, pb)
    assert hash_flow(flow_of(p)) == hash_flow(flow_of(reverse(p)))


def test_policy_partition_enterprise():
    net = load_scenario("enterprise", subnets=6).net
    part = policy_partition(net)
    # public, private and quarantined subnets plus the outside host
    assert len(part.class_ids) == 4
    assert sum(len(part.members(c)) for c in part.class_ids) == len(net.host_ids)


def test_general_middlebox_blocks_slicing():
    s = load_scenario("datacenter")
    net = s.net
    forced = net.__class__(**{**net.__dict__, "middleboxes": tuple(
        m.__class__(m.id, m.model, m.config, "general") for m in net.middleboxes)})
    assert instance_class(forced.middleboxes[0]) == "general"
    with pytest.raises(GeneralMiddleboxPresent):
        build_slice(forced, s.invariants[0])


def test_slice_is_smaller_and_contains_references():
    s = load_scenario("enterprise", subnets=9)
    for inv in s.invariants:
        sl = build_slice(s.net, inv)
        assert inv.target in sl.nodes
        assert len(sl.nodes) < len(s.net.node_ids)


def test_cache_firewall_needs_representatives():
    s = load_scenario("cache_firewall")
    inv = s.invariants[0]
    sl = build_slice(s.net, inv)
    assert sl.rule == "origin-agnostic" and sl.representatives
    assert naive_slice(s.net, inv).nodes < sl.nodes


@given(st.integers(0, 100_000))
@settings(max_examples=20, deadline=None)
def test_slice_equivalence_random(seed):
    s = load_scenario("random_flow_parallel", seed=seed)
    inv = s.invariants[0]
    assert check_slice_equivalence(s.net, build_slice(s.net, inv), inv, Bounds(depth=5, max_emits=3))


def test_restrict_keeps_forwarding():
    s = load_scenario("enterprise", subnets=3, delete_rule=1)
    inv = s.invariants[0]
    sub = restrict(s.net, build_slice(s.net, inv))
    v = explore(sub, inv, Bounds(depth=8))
    if v.kind == "violated":
        from mboxverify.bmc import replay
        assert replay(s.net, v.trace, inv)
