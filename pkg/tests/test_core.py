import pytest
from hypothesis import given, strategies as st

from mboxverify.core import (Universe, Packet, Trace, HostEmit, Recv, Fail, Recover, flow_of, make_flow,
                             reverse, validate_trace)
from mboxverify.scenarios import load_scenario

addr = st.sampled_from(["a", "b", "c"])
port = st.sampled_from(["1", "2"])
packets = st.builds(Packet, addr, addr, port, port)


@given(packets)
def test_flow_is_direction_free(p):
    assert flow_of(p) == flow_of(reverse(p))
    assert reverse(reverse(p)) == p


@given(addr, port, addr, port)
def test_make_flow_canonical(a, pa, b, pb):
    f = make_flow((a, pa), (b, pb))
    assert f == make_flow((b, pb), (a, pa))
    assert f.lo <= f.hi


@given(packets)
def test_packet_json_roundtrip(p):
    assert Packet.from_json(p.to_json()) == p


def test_origin_defaults_to_src():
    assert Packet("a", "b", "1", "1").origin == "a"


def test_universe_rejects_duplicates():
    with pytest.raises(ValueError):
        Universe(("a", "a"), ("1",))


@pytest.fixture(scope="module")
def red():
    return load_scenario("redundant").net


def _emit(net, t, host, dst_addr):
    p = Packet(net.address_of(host), dst_addr, "1", "1", content="c0")
    return HostEmit(t, host, p, net.route(host, p.dst))


def test_validate_trace_accepts_emit(red):
    h = red.host_ids[0]
    other = [a for a in red.universe.addresses if a != red.address_of(h)][0]
    assert validate_trace(Trace((_emit(red, 0, h, other),)), red) == []


def test_validate_trace_flags_problems(red):
    h = red.host_ids[0]
    mb = sorted(red.middlebox_ids)[0]
    other = [a for a in red.universe.addresses if a != red.address_of(h)][0]
    e = _emit(red, 0, h, other)
    bogus_recv = Recv(1, mb, h, Packet("zz", other, "1", "1"), (), ())
    probs = validate_trace(Trace((e, bogus_recv, Recover(2, mb), Fail(4, h))), red)
    text = " ".join(probs)
    assert "recv without prior send" in text
    assert "recover of non-failed" in text
    assert "timestep 4 at position 3" in text
    assert "fail of non-middlebox" in text
