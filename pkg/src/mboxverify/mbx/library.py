"""Builtin middlebox models, written in the model language."""
from __future__ import annotations

from functools import lru_cache

from .ast import MiddleboxModel
from .dsl import parse_model

LEARNING_FIREWALL = """\
# Hole-punching firewall: replies of established flows pass, new flows need an ACL entry.
model learning_firewall(acl: Set[(Address, Address)]) {
  state established: Set[Flow]
  failure closed
  when established.contains(flow(p)) => {
    forward(p)
  }
  when acl.contains((p.src, p.dst)) => {
    established += flow(p)
    forward(p)
  }
  otherwise => { drop }
}
"""

NAT = """\
# Source NAT. New flows get a port from remapped_port; replies are translated back
# only when they come from the endpoint the mapping was created for.
model nat(nat_address: Address) {
  oracle remapped_port(Packet): Port range Port distinct
  state active: Map[Flow, Port]
  state reverse: Map[Port, (Address, Port)]
  failure explicit
  when fail(self) => { drop }
  when p.dst == nat_address && reverse.contains(p.dst_port)
       && active.contains(flow(p{dst = reverse[p.dst_port].0, dst_port = reverse[p.dst_port].1})) => {
    let (addr, port) = reverse[p.dst_port]
    p.dst := addr
    p.dst_port := port
    forward(p)
  }
  when active.contains(flow(p)) => {
    let port = active[flow(p)]
    p.src := nat_address
    p.src_port := port
    forward(p)
  }
  otherwise => {
    let fl = flow(p)
    let address = p.src
    let port = p.src_port
    let mapped = remapped_port(p)
    p.src := nat_address
    p.src_port := mapped
    active[fl] := mapped
    reverse[mapped] := (address, port)
    forward(p)
  }
}
"""

ACL_FIREWALL = """\
# Stateless firewall with a deny list of (src, dst) pairs.
model acl_firewall(deny: Set[(Address, Address)]) {
  failure closed
  when deny.contains((p.src, p.dst)) => { drop }
  otherwise => { forward(p) }
}
"""

CONTENT_CACHE = """\
# Content cache in front of `servers`. Responses populate the cache; a request for
# cached content is answered locally unless (client, origin) is denied.
model content_cache(servers: Set[Address], deny: Set[(Address, Address)]) {
  state cached: Map[Content, Address]
  failure open
  when servers.contains(p.src) => {
    cached[p.content] := p.origin
    forward(p)
  }
  when servers.contains(p.dst) && cached.contains(p.content)
       && deny.contains((p.src, cached[p.content])) => { drop }
  when servers.contains(p.dst) && cached.contains(p.content) => {
    forward(p{src = p.dst, dst = p.src, src_port = p.dst_port, dst_port = p.src_port,
              origin = cached[p.content]})
  }
  otherwise => { forward(p) }
}
"""

LOAD_BALANCER = """\
# Rewrites traffic for the virtual address to a backend chosen once per flow.
model load_balancer(vip: Address, backends: Set[Address]) {
  oracle backend(Flow): Address range backends
  failure closed
  when p.dst == vip => {
    p.dst := backend(flow(p))
    forward(p)
  }
  otherwise => { forward(p) }
}
"""

IDPS = """\
# Intrusion prevention: drops malicious packets and, once an attack on a
# destination is detected, all further traffic to it.
model idps() {
  state detected: Set[Address]
  class malicious
  failure closed
  when malicious?(p) => {
    detected += p.dst
    drop
  }
  when detected.contains(p.dst) => { drop }
  otherwise => { forward(p) }
}
"""

SOURCES = {
    "learning_firewall": LEARNING_FIREWALL,
    "nat": NAT,
    "acl_firewall": ACL_FIREWALL,
    "content_cache": CONTENT_CACHE,
    "load_balancer": LOAD_BALANCER,
    "idps": IDPS,
}

# Declared state classes; checked by slicer.classify_state_class.
DECLARED_CLASS = {
    "learning_firewall": "flow-parallel",
    "nat": "flow-parallel",
    "acl_firewall": "flow-parallel",
    "content_cache": "origin-agnostic",
    "load_balancer": "flow-parallel",
    "idps": "origin-agnostic",
}


class UnknownBuiltin(KeyError):
    pass


@lru_cache(maxsize=None)
def builtin(name: str) -> MiddleboxModel:
    try:
        src = SOURCES[name]
    except KeyError:
        raise UnknownBuiltin(name) from None
    return parse_model(src)
