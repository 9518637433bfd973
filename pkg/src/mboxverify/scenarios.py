"""Generated evaluation networks. Each generator returns ``(network dict, invariant dicts)``."""
from __future__ import annotations

import random
from dataclasses import dataclass

from .invariants import invariant_from_json
from .network import network_from_dict


def _rule(node, dst, nxt):
    return {"node": node, "dst": dst, "next": nxt}


def _net(name, addresses, hosts, middleboxes, links, default, scenarios=None, ports=("1",),
         contents=("c0",)):
    d = {
        "name": name,
        "universe": {"addresses": list(addresses), "ports": list(ports), "contents": list(contents)},
        "hosts": [{"id": h, "address": a} for h, a in hosts],
        "middleboxes": middleboxes,
        "links": [list(l) for l in links],
        "forwarding": {"default": default},
    }
    if scenarios:
        d["forwarding"]["scenarios"] = scenarios
    return d


def enterprise(subnets: int = 3, delete_rule: int = 0, seed: int = 0):
    """External host behind a gateway and a learning firewall; one host per
    subnet, a third public, a third quarantined, the rest private.

    ``delete_rule`` removes the deny for that many quarantined subnets.
    """
    if subnets < 3:
        raise ValueError("enterprise needs at least 3 subnets")
    rng = random.Random(seed)
    n_pub = n_quar = subnets // 3
    roles = ["public"] * n_pub + ["quarantined"] * n_quar + ["private"] * (subnets - 2 * n_pub)
    rng.shuffle(roles)
    ids = [f"h{i}" for i in range(subnets)]
    pub = [h for h, r in zip(ids, roles) if r == "public"]
    priv = [h for h, r in zip(ids, roles) if r == "private"]
    quar = [h for h, r in zip(ids, roles) if r == "quarantined"]
    acl = [["x", h] for h in pub] + [[h, "x"] for h in pub] + [[h, "x"] for h in priv]
    acl += [["x", h] for h in quar[:delete_rule]]
    default = [_rule("gw", "x", "ext"), _rule("gw", "*", "fw"),
               _rule("fw", "x", "gw"), _rule("fw", "*", "core"),
               _rule("core", "*", "fw")] + [_rule("core", h, h.upper()) for h in ids]
    net = _net(
        f"enterprise-{subnets}", ["x"] + ids, [("ext", "x")] + [(h.upper(), h) for h in ids],
        [{"id": "gw", "model": "acl_firewall", "config": {"deny": []}},
         {"id": "fw", "model": "learning_firewall", "config": {"acl": acl}}],
        [("ext", "gw"), ("gw", "fw"), ("fw", "core")] + [("core", h.upper()) for h in ids],
        default)
    invs = []
    for h in quar:
        invs.append({"name": f"quarantine-in-{h}", "type": "simple-isolation", "target": h.upper(),
                     "src": "x", "max_failures": 0})
        invs.append({"name": f"quarantine-out-{h}", "type": "simple-isolation", "target": "ext",
                     "src": h, "max_failures": 0})
    for h in priv:
        invs.append({"name": f"private-{h}", "type": "flow-isolation", "target": h.upper(),
                     "src": "x", "max_failures": 0})
    return net, invs


def redundant(break_backup: bool = False):
    """Primary and backup learning firewalls; the backup carries traffic when
    the primary fails. ``break_backup`` drops the quarantine deny from the backup."""
    acl = [["x", "p"], ["p", "x"]]
    backup = acl + ([["x", "q"]] if break_backup else [])
    default = [_rule("s1", "p", "fw1"), _rule("s1", "q", "fw1"), _rule("s1", "x", "X"),
               _rule("s2", "x", "fw1"), _rule("s2", "p", "P"), _rule("s2", "q", "Q"),
               _rule("fw1", "x", "s1"), _rule("fw1", "*", "s2"),
               _rule("fw2", "x", "s1"), _rule("fw2", "*", "s2")]
    scen = {"fw1": [_rule("s1", "p", "fw2"), _rule("s1", "q", "fw2"), _rule("s2", "x", "fw2")]}
    net = _net(
        "redundant", ["x", "p", "q"], [("X", "x"), ("P", "p"), ("Q", "q")],
        [{"id": "fw1", "model": "learning_firewall", "config": {"acl": acl}},
         {"id": "fw2", "model": "learning_firewall", "config": {"acl": backup}}],
        [("X", "s1"), ("s1", "fw1"), ("s1", "fw2"), ("fw1", "s2"), ("fw2", "s2"), ("s2", "P"), ("s2", "Q")],
        default, scen)
    invs = [{"name": "quarantine-q", "type": "simple-isolation", "target": "Q", "src": "x",
             "max_failures": 1}]
    return net, invs


def datacenter(reroute: bool = False):
    """Traffic from outside passes an IDPS and a firewall before the servers.
    When idps1 fails a backup IDPS takes over unless ``reroute`` sends the
    traffic straight to the firewall."""
    acl = [["x", "w1"], ["x", "w2"], ["w1", "x"], ["w2", "x"]]
    default = [_rule("s1", "w1", "idps1"), _rule("s1", "w2", "idps1"), _rule("s1", "x", "X"),
               _rule("idps1", "x", "s1"), _rule("idps1", "*", "fw"),
               _rule("idps2", "x", "s1"), _rule("idps2", "*", "fw"),
               _rule("fw", "x", "idps1"), _rule("fw", "*", "s2"),
               _rule("s2", "w1", "W1"), _rule("s2", "w2", "W2"), _rule("s2", "x", "fw")]
    bypass = "fw" if reroute else "idps2"
    scen = {"idps1": [_rule("s1", "w1", bypass), _rule("s1", "w2", bypass), _rule("fw", "x", "s1")]}
    net = _net(
        "datacenter", ["x", "w1", "w2"], [("X", "x"), ("W1", "w1"), ("W2", "w2")],
        [{"id": "idps1", "model": "idps", "config": {}},
         {"id": "idps2", "model": "idps", "config": {}},
         {"id": "fw", "model": "learning_firewall", "config": {"acl": acl}}],
        [("X", "s1"), ("s1", "idps1"), ("s1", "idps2"), ("s1", "fw"), ("idps1", "fw"),
         ("idps2", "fw"), ("fw", "s2"), ("s2", "W1"), ("s2", "W2")],
        default, scen)
    invs = [{"name": f"traversal-{w}", "type": "traversal", "target": w.upper(), "src": "x",
             "via": "idps", "max_failures": 1} for w in ("w1", "w2")]
    return net, invs


def multi_tenant(tenants: int = 4, public: int = 5, private: int = 5):
    """Tenants behind their own learning firewall. Public VMs accept
    connections from other tenants; private VMs only talk within the tenant
    or answer connections they opened."""
    if tenants < 2:
        raise ValueError("multi_tenant needs at least 2 tenants")
    vms = {t: [f"t{t}pub{k}" for k in range(public)] + [f"t{t}priv{k}" for k in range(private)]
           for t in range(tenants)}
    everyone = [v for t in range(tenants) for v in vms[t]]
    hosts, mbs, links, default = [], [], [], []
    for t in range(tenants):
        sw, fw = f"sw{t}", f"fw{t}"
        others = [v for v in everyone if not v.startswith(f"t{t}p")]
        acl = [[v, o] for v in vms[t] for o in others]
        acl += [[o, v] for v in vms[t] if "pub" in v for o in others]
        mbs.append({"id": fw, "model": "learning_firewall", "config": {"acl": acl}})
        links += [(sw, fw), (fw, "core")]
        default += [_rule(sw, "*", fw), _rule(fw, "*", "core")]
        for v in vms[t]:
            hosts.append((v.upper(), v))
            links.append((v.upper(), sw))
            default += [_rule(sw, v, v.upper()), _rule(fw, v, sw), _rule("core", v, fw)]
    net = _net(f"multi-tenant-{tenants}", everyone, hosts, mbs, links, default)
    invs = []
    for i in range(tenants):
        for j in range(tenants):
            if i == j:
                continue
            invs.append({"name": f"privpriv-{i}-{j}", "type": "flow-isolation",
                         "target": f"T{j}PRIV0", "src": f"t{i}priv0", "max_failures": 0})
            invs.append({"name": f"pubpriv-{i}-{j}", "type": "flow-isolation",
                         "target": f"T{j}PRIV0", "src": f"t{i}pub0", "max_failures": 0})
            invs.append({"name": f"privpub-{i}-{j}", "type": "simple-isolation",
                         "target": f"T{j}PUB0", "src": f"t{i}priv0", "max_failures": 0})
    return net, invs


def isp_ids(peerings: int = 2, customers: int = 2):
    """Each peering point has an IDPS followed by a learning firewall; every
    inbound packet to a customer must pass an IDPS."""
    peers = [f"e{k}" for k in range(peerings)]
    custs = [f"c{k}" for k in range(customers)]
    acl = [[c, e] for c in custs for e in peers]
    hosts = [(e.upper(), e) for e in peers] + [(c.upper(), c) for c in custs]
    mbs, links, default = [], [], []
    for k, e in enumerate(peers):
        ids, fw = f"ids{k}", f"pfw{k}"
        mbs += [{"id": ids, "model": "idps", "config": {}},
                {"id": fw, "model": "learning_firewall", "config": {"acl": acl}}]
        links += [(e.upper(), ids), (ids, fw), (fw, "core")]
        default += [_rule(ids, e, e.upper()), _rule(ids, "*", fw), _rule(fw, e, ids),
                    _rule(fw, "*", "core"), _rule("core", e, fw)]
    for c in custs:
        links.append(("core", c.upper()))
        default.append(_rule("core", c, c.upper()))
    net = _net(f"isp-{peerings}", peers + custs, hosts, mbs, links, default)
    invs = [{"name": f"ids-{c}-{e}", "type": "traversal", "target": c.upper(), "src": e,
             "via": "idps", "max_failures": 0} for c in custs for e in peers]
    return net, invs


def cache_firewall():
    """Clients share a content cache in front of a firewall denying A<->S.
    A may still obtain S's data if another client populated the cache."""
    default = [_rule("sw", "a", "A"), _rule("sw", "b", "B"), _rule("sw", "b2", "B2"),
               _rule("sw", "*", "cache"), _rule("cache", "s", "fw"), _rule("cache", "*", "sw"),
               _rule("fw", "s", "S"), _rule("fw", "*", "cache")]
    net = _net(
        "cache-firewall", ["a", "b", "b2", "s"], [("A", "a"), ("B", "b"), ("B2", "b2"), ("S", "s")],
        [{"id": "cache", "model": "content_cache", "config": {"servers": ["s"], "deny": []}},
         {"id": "fw", "model": "acl_firewall", "config": {"deny": [["a", "s"], ["s", "a"]]}}],
        [("A", "sw"), ("B", "sw"), ("B2", "sw"), ("sw", "cache"), ("cache", "fw"), ("fw", "S")],
        default)
    invs = [{"name": "a-not-from-s", "type": "data-isolation", "target": "A", "origin": "s",
             "max_failures": 0}]
    return net, invs


def random_flow_parallel(seed: int, max_nodes: int = 6):
    """Small random network of learning/ACL firewalls around a core switch,
    with one random isolation invariant."""
    rng = random.Random(seed)
    n_mb = rng.randint(1, 2)
    n_hosts = rng.randint(2, max_nodes - n_mb)
    hs = [f"h{i}" for i in range(n_hosts)]
    mb_ids = [f"m{k}" for k in range(n_mb)]
    attach = {h: rng.choice(mb_ids + ["core"]) for h in hs}
    pairs = [[a, b] for a in hs for b in hs if a != b]
    mbs, links, default = [], [], []
    for m in mb_ids:
        chosen = [p for p in pairs if rng.random() < 0.4]
        if rng.random() < 0.5:
            mbs.append({"id": m, "model": "learning_firewall", "config": {"acl": chosen}})
        else:
            mbs.append({"id": m, "model": "acl_firewall", "config": {"deny": chosen}})
        links.append((m, "core"))
        default.append(_rule(m, "*", "core"))
    for h in hs:
        links.append((h.upper(), attach[h]))
        if attach[h] == "core":
            default.append(_rule("core", h, h.upper()))
        else:
            default += [_rule("core", h, attach[h]), _rule(attach[h], h, h.upper())]
    net = _net(f"random-{seed}", hs, [(h.upper(), h) for h in hs], mbs, links, default)
    tgt, src = rng.sample(hs, 2)
    kind = rng.choice(["simple-isolation", "flow-isolation"])
    invs = [{"name": f"rand-{seed}", "type": kind, "target": tgt.upper(), "src": src, "max_failures": 0}]
    return net, invs


_CHAIN_MODELS = ("learning_firewall", "acl_firewall", "nat", "load_balancer", "idps", "content_cache")


def random_mixed(seed: int, max_hosts: int = 4):
    """Inside hosts and outside hosts joined by a random chain of one or two
    middleboxes of any builtin type, with one random invariant."""
    rng = random.Random(seed)
    n_in = rng.randint(1, max_hosts - 1)
    n_out = rng.randint(1, max_hosts - n_in)
    ins = [f"i{k}" for k in range(n_in)]
    outs = [f"o{k}" for k in range(n_out)]
    hosts = ins + outs
    chain = [rng.choice(_CHAIN_MODELS) for _ in range(rng.randint(1, 2))]
    ids = [f"m{k}" for k in range(len(chain))]
    pairs = [[a, b] for a in hosts for b in hosts if a != b]
    extra = []  # (address, owning middlebox)
    mbs = []
    for m, model in zip(ids, chain):
        if model == "learning_firewall":
            cfg = {"acl": [p for p in pairs if rng.random() < 0.5]}
        elif model == "acl_firewall":
            cfg = {"deny": [p for p in pairs if rng.random() < 0.3]}
        elif model == "nat":
            cfg = {"nat_address": f"n{m}"}
            extra.append((f"n{m}", m))
        elif model == "load_balancer":
            cfg = {"vip": f"v{m}", "backends": rng.sample(ins, rng.randint(1, len(ins)))}
            extra.append((f"v{m}", m))
        elif model == "idps":
            cfg = {}
        else:
            cfg = {"servers": rng.sample(outs, 1), "deny": [p for p in pairs if rng.random() < 0.3]}
        mbs.append({"id": m, "model": model, "config": cfg})
    path = ["swi"] + ids + ["swo"]
    links = [(path[k], path[k + 1]) for k in range(len(path) - 1)]
    links += [(h.upper(), "swi") for h in ins] + [(h.upper(), "swo") for h in outs]
    default = [_rule("swi", h, h.upper()) for h in ins] + [_rule("swo", h, h.upper()) for h in outs]
    for k, node in enumerate(path):
        inward, outward = (path[k - 1] if k else None), (path[k + 1] if k + 1 < len(path) else None)
        if outward is not None:
            default.append(_rule(node, "*", outward))
        if inward is not None:
            default += [_rule(node, h, inward) for h in ins]
        for addr, owner in extra:
            pos = path.index(owner)
            if k < pos:
                default.append(_rule(node, addr, outward))
            elif k > pos:
                default.append(_rule(node, addr, inward))
    if path[-1] == "swo":
        default.append(_rule("swo", "*", path[-2]))
    ports = ("1", "2") if "nat" in chain else ("1",)
    net = _net(f"mixed-{seed}", hosts + [a for a, _ in extra], [(h.upper(), h) for h in hosts],
               mbs, links, default, ports=ports)
    tgt, src = rng.sample(hosts, 2)
    kind = rng.choice(["simple-isolation", "flow-isolation", "data-isolation", "traversal"])
    inv = {"name": f"mixed-{seed}", "type": kind, "target": tgt.upper(),
           "max_failures": rng.choice([0, 0, 1])}
    if kind == "data-isolation":
        inv["origin"] = src
    elif kind == "traversal":
        inv["via"] = rng.choice(chain)
        inv["src"] = src
    else:
        inv["src"] = src
    return net, [inv]


SCENARIOS = {
    "enterprise": enterprise,
    "redundant": redundant,
    "datacenter": datacenter,
    "traversal": datacenter,
    "multi_tenant": multi_tenant,
    "isp_ids": isp_ids,
    "cache_firewall": cache_firewall,
    "random_flow_parallel": random_flow_parallel,
    "random_mixed": random_mixed,
}


@dataclass(frozen=True)
class Scenario:
    net: object
    invariants: tuple
    net_json: dict
    invariants_json: tuple


def gen_scenario(name: str, **params) -> tuple[dict, list]:
    try:
        fn = SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    try:
        return fn(**params)
    except TypeError as e:
        raise ValueError(f"invalid parameters for {name}: {e}") from None


def load_scenario(name: str, **params) -> Scenario:
    """Generate and parse a scenario in one step."""
    nd, invs = gen_scenario(name, **params)
    net = network_from_dict(nd)
    return Scenario(net, tuple(invariant_from_json(i, net) for i in invs), nd, tuple(invs))
