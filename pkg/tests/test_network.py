import copy
import json

import pytest
from hypothesis import given, settings, strategies as st

from mboxverify.netfunc import StaticLoop, forwarding_graph, omega_axioms
from mboxverify.network import NetworkError, load_network, network_from_dict, network_to_dict
from mboxverify.scenarios import gen_scenario, load_scenario


def small():
    return {
        "name": "small",
        "universe": {"addresses": ["a", "b"], "ports": ["1"]},
        "hosts": [{"id": "A", "address": "a"}, {"id": "B", "address": "b"}],
        "middleboxes": [{"id": "fw", "model": "learning_firewall", "config": {"acl": [["a", "b"]]}}],
        "links": [["A", "s1"], ["s1", "fw"], ["fw", "s2"], ["s2", "B"]],
        "forwarding": {"default": [
            {"node": "A", "dst": "*", "next": "s1"}, {"node": "s1", "dst": "b", "next": "fw"},
            {"node": "s1", "dst": "a", "next": "A"}, {"node": "fw", "dst": "b", "next": "s2"},
            {"node": "fw", "dst": "a", "next": "s1"}, {"node": "s2", "dst": "b", "next": "B"},
            {"node": "s2", "dst": "a", "next": "fw"}, {"node": "B", "dst": "*", "next": "s2"}]},
    }


def test_switches_collapse_into_transfer():
    net = network_from_dict(small())
    tf = net.transfer()
    assert tf.next("A", "b") == "fw"
    assert tf.next("fw", "b") == "B"
    assert tf.next("fw", "a") == "A"
    assert net.switch_ids == frozenset({"s1", "s2"})


def test_routes_blackhole_when_middlebox_failed_without_scenario():
    net = network_from_dict(small())
    assert net.route("A", "b", frozenset({"fw"})) in (None, "fw")


@pytest.mark.parametrize("mutate, pointer", [
    (lambda d: d["hosts"][1].__setitem__("address", "zz"), "/hosts/1/address"),
    (lambda d: d["hosts"][0].pop("id"), "/hosts/0"),
    (lambda d: d["middleboxes"][0].__setitem__("model", "no_such_box"), "/middleboxes/0"),
    (lambda d: d["hosts"].append({"id": "fw", "address": "a"}), "/hosts"),
])
def test_schema_errors_carry_pointers(mutate, pointer):
    d = copy.deepcopy(small())
    mutate(d)
    with pytest.raises(NetworkError) as e:
        network_from_dict(d)
    assert e.value.pointer.startswith(pointer)


def test_static_loop_reports_cycle():
    d = small()
    d["forwarding"]["default"] = [r for r in d["forwarding"]["default"] if r["node"] != "s2"]
    d["links"].append(["s2", "s3"])
    d["forwarding"]["default"] += [{"node": "s2", "dst": "b", "next": "s3"},
                                   {"node": "s3", "dst": "b", "next": "s2"}]
    with pytest.raises(StaticLoop) as e:
        network_from_dict(d).transfer()
    assert {"s2", "s3"} <= set(e.value.nodes)
    assert e.value.dst == "b"


def test_load_network_from_file(tmp_path):
    p = tmp_path / "n.json"
    p.write_text(json.dumps(small()))
    assert load_network(p).host_ids == ("A", "B")
    p.write_text("{")
    with pytest.raises(NetworkError):
        load_network(p)


@pytest.mark.parametrize("name", ["enterprise", "redundant", "datacenter", "isp_ids", "cache_firewall"])
def test_dict_roundtrip(name):
    nd, _ = gen_scenario(name)
    net = network_from_dict(nd)
    again = network_from_dict(network_to_dict(net))
    assert again.transfer().next == net.transfer().next or all(
        again.route(h, a) == net.route(h, a) for h in net.host_ids for a in net.universe.addresses)


def test_failure_scenario_tables():
    net = load_scenario("redundant").net
    keys = net.forwarding.scenario_keys
    assert keys
    failed = frozenset(keys[0].split(","))
    differs = any(net.route(h, a) != net.route(h, a, failed)
                  for h in net.host_ids for a in net.universe.addresses)
    assert differs


@given(st.integers(0, 40))
@settings(max_examples=15, deadline=None)
def test_forwarding_graph_closed(seed):
    s = load_scenario("random_flow_parallel", seed=seed)
    tf = s.net.transfer()
    g = forwarding_graph(tf, {s.invariants[0].target})
    for n in g.nodes:
        for a in s.net.universe.addresses:
            nxt = tf.next(n, a)
            if nxt is not None and (n, nxt) in g.links:
                assert nxt in g.nodes


def test_omega_axioms_render_and_hold_on_bmc_traces():
    from mboxverify.bmc import Bounds, explore

    s = load_scenario("redundant", break_backup=True)
    inv = s.invariants[0].__class__(**{**s.invariants[0].__dict__, "max_failures": 1})
    v = explore(s.net, inv, Bounds(depth=8))
    assert v.kind == "violated"
    for ax in omega_axioms(s.net.transfer()):
        assert ax.text
        if ax.evaluator is not None:
            assert ax.holds_on(v.trace, s.net), ax.name
