"""Network description: hosts, middlebox instances, links and forwarding tables."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema

from .core import Universe, scenario_key
from .mbx import MiddleboxInstance, builtin, instantiate, parse_model


class NetworkError(ValueError):
    """Invalid network input; ``pointer`` is a JSON pointer to the offending value."""

    def __init__(self, msg: str, pointer: str = ""):
        super().__init__(f"{pointer or '/'}: {msg}")
        self.pointer = pointer


@dataclass(frozen=True)
class Host:
    id: str
    address: str


@dataclass(frozen=True)
class ForwardingTable:
    """Per-node rules ``(node, dst, next)``; ``dst == "*"`` is a node's default route.

    ``scenarios`` maps a scenario key (comma-joined sorted failed ids) to
    override rules applied on top of ``default``.
    """

    default: tuple = ()
    scenarios: tuple = ()  # ((key, rules), ...)

    def table(self, failed=frozenset()) -> dict:
        tab = {(n, d): nxt for n, d, nxt in self.default}
        key = scenario_key(failed)
        for k, rules in self.scenarios:
            if k == key:
                tab.update({(n, d): nxt for n, d, nxt in rules})
        return tab

    @property
    def scenario_keys(self) -> list[str]:
        return [k for k, _ in self.scenarios]


@dataclass(frozen=True, eq=False)
class Network:
    universe: Universe
    hosts: tuple = ()
    middleboxes: tuple = ()
    links: frozenset = frozenset()  # directed (a, b) pairs
    forwarding: ForwardingTable = ForwardingTable()
    name: str = ""
    excluded: frozenset = frozenset()  # nodes cut away by restrict(); deliveries to them are dropped
    _tf_cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- lookups
    @property
    def host_ids(self) -> tuple:
        return tuple(h.id for h in self.hosts)

    @property
    def middlebox_ids(self) -> frozenset:
        return frozenset(m.id for m in self.middleboxes)

    @property
    def switch_ids(self) -> frozenset:
        ends = {a for a, _ in self.links} | {b for _, b in self.links}
        return frozenset(ends - set(self.host_ids) - self.middlebox_ids - self.excluded)

    @property
    def node_ids(self) -> tuple:
        return self.host_ids + tuple(m.id for m in self.middleboxes)

    def address_of(self, node: str) -> str | None:
        return self._host_addr.get(node)

    def host_at(self, address: str) -> str | None:
        return self._addr_host.get(address)

    def instance(self, node: str) -> MiddleboxInstance | None:
        return self._inst.get(node)

    @property
    def _host_addr(self) -> dict:
        if "_ha" not in self._tf_cache:
            self._tf_cache["_ha"] = {h.id: h.address for h in self.hosts}
            self._tf_cache["_ah"] = {h.address: h.id for h in self.hosts}
            self._tf_cache["_in"] = {m.id: m for m in self.middleboxes}
        return self._tf_cache["_ha"]

    @property
    def _addr_host(self) -> dict:
        self._host_addr
        return self._tf_cache["_ah"]

    @property
    def _inst(self) -> dict:
        self._host_addr
        return self._tf_cache["_in"]

    @property
    def infra_addresses(self) -> tuple:
        """Universe addresses not owned by any host (NAT and virtual addresses)."""
        return tuple(a for a in self.universe.addresses if a not in self._addr_host)

    def neighbors(self, node: str) -> list[str]:
        if "_adj" not in self._tf_cache:
            adj: dict = {}
            for a, b in sorted(self.links):
                adj.setdefault(a, []).append(b)
            self._tf_cache["_adj"] = adj
        return self._tf_cache["_adj"].get(node, [])

    # -- forwarding
    def transfer(self, failed=frozenset()):
        from .netfunc import compute_transfer
        from .core import FailureScenario

        fast = ("tf-set", frozenset(failed))
        if fast in self._tf_cache:
            return self._tf_cache[fast]
        k = scenario_key(failed)
        key = ("tf", k if k in self.forwarding.scenario_keys else "default")
        if key not in self._tf_cache:
            self._tf_cache[key] = compute_transfer(self, self.forwarding, FailureScenario(frozenset(failed)))
        self._tf_cache[fast] = self._tf_cache[key]
        return self._tf_cache[key]

    def route(self, node: str, dst: str, failed=frozenset()) -> str | None:
        return self.transfer(failed).next(node, dst)

    def restrict(self, nodes, addresses=None) -> Network:
        """Subnetwork on ``nodes`` (hosts and middleboxes); forwarding stays as is,
        deliveries to removed nodes become blackholes."""
        keep = set(nodes)
        cut = frozenset(self.node_ids) - keep
        hosts = tuple(h for h in self.hosts if h.id in keep)
        mbs = tuple(m for m in self.middleboxes if m.id in keep)
        if addresses is None:
            addresses = {h.address for h in hosts} | set(self.infra_addresses)
        return Network(
            universe=self.universe.restrict(addresses), hosts=hosts, middleboxes=mbs,
            links=self.links, forwarding=self.forwarding, name=self.name + "|slice",
            excluded=self.excluded | cut,
        )

    def with_universe(self, universe: Universe) -> Network:
        return replace(self, universe=universe, _tf_cache={})


# -- JSON loading ---------------------------------------------------------

_RULE = {
    "type": "object",
    "required": ["node", "dst", "next"],
    "properties": {"node": {"type": "string"}, "dst": {"type": "string"}, "next": {"type": "string"}},
}

NETWORK_SCHEMA = {
    "type": "object",
    "required": ["universe", "hosts", "links", "forwarding"],
    "properties": {
        "name": {"type": "string"},
        "universe": {
            "type": "object",
            "required": ["addresses", "ports"],
            "properties": {
                "addresses": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "ports": {"type": "array", "items": {"type": ["string", "integer"]}, "minItems": 1},
                "contents": {"type": "array", "items": {"type": "string"}},
            },
        },
        "hosts": {
            "type": "array",
            "items": {
                "type": "object", "required": ["id", "address"],
                "properties": {"id": {"type": "string"}, "address": {"type": "string"}},
            },
        },
        "middleboxes": {
            "type": "array",
            "items": {
                "type": "object", "required": ["id", "model"],
                "properties": {
                    "id": {"type": "string"}, "model": {"type": "string"},
                    "config": {"type": "object"},
                    "class_hint": {"enum": ["flow-parallel", "origin-agnostic", "general", "auto"]},
                },
            },
        },
        "links": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
        },
        "forwarding": {
            "type": "object",
            "required": ["default"],
            "properties": {
                "default": {"type": "array", "items": _RULE},
                "scenarios": {"type": "object", "additionalProperties": {"type": "array", "items": _RULE}},
            },
        },
    },
}


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def network_from_dict(d: dict, base: Path | None = None) -> Network:
    try:
        jsonschema.validate(d, NETWORK_SCHEMA)
    except jsonschema.ValidationError as e:
        raise NetworkError(e.message, _pointer(e.absolute_path)) from None
    u = d["universe"]
    universe = Universe(tuple(u["addresses"]), tuple(str(p) for p in u["ports"]),
                        tuple(u.get("contents", ["c0"])))
    ids: set[str] = set()
    hosts = []
    for i, h in enumerate(d["hosts"]):
        if h["id"] in ids:
            raise NetworkError(f"duplicate node id {h['id']!r}", f"/hosts/{i}/id")
        if h["address"] not in universe.addresses:
            raise NetworkError("address not in universe", f"/hosts/{i}/address")
        ids.add(h["id"])
        hosts.append(Host(h["id"], h["address"]))
    if len({h.address for h in hosts}) != len(hosts):
        raise NetworkError("two hosts share an address", "/hosts")
    mbs = []
    for i, m in enumerate(d.get("middleboxes", [])):
        if m["id"] in ids:
            raise NetworkError(f"duplicate node id {m['id']!r}", f"/middleboxes/{i}/id")
        ids.add(m["id"])
        ref = m["model"]
        try:
            if ref.endswith(".mbx") or "/" in ref:
                path = Path(ref) if base is None else base / ref
                model = parse_model(path.read_text())
            else:
                model = builtin(ref)
            inst = instantiate(m["id"], model, m.get("config", {}), universe, m.get("class_hint", "auto"))
        except (OSError, KeyError, ValueError) as e:
            raise NetworkError(str(e), f"/middleboxes/{i}") from None
        mbs.append(inst)
    links = set()
    for i, (a, b) in enumerate(d["links"]):
        links.add((a, b))
        links.add((b, a))
    nodes = ids | {a for a, _ in links}

    def rules(items, where):
        out = []
        for j, r in enumerate(items):
            for k in ("node", "next"):
                if r[k] not in nodes:
                    raise NetworkError(f"unknown node {r[k]!r}", f"{where}/{j}/{k}")
            if (r["node"], r["next"]) not in links:
                raise NetworkError(f"next hop {r['next']!r} not adjacent to {r['node']!r}", f"{where}/{j}")
            if r["dst"] != "*" and r["dst"] not in universe.addresses:
                raise NetworkError("dst not in universe", f"{where}/{j}/dst")
            out.append((r["node"], r["dst"], r["next"]))
        return tuple(out)

    fw = d["forwarding"]
    scen = []
    for key, items in sorted(fw.get("scenarios", {}).items()):
        failed = [x for x in key.split(",") if x]
        for x in failed:
            if x not in {m.id for m in mbs}:
                raise NetworkError(f"scenario fails non-middlebox {x!r}", f"/forwarding/scenarios/{key}")
        scen.append((",".join(sorted(failed)), rules(items, f"/forwarding/scenarios/{key}")))
    table = ForwardingTable(rules(fw["default"], "/forwarding/default"), tuple(scen))
    return Network(universe, tuple(hosts), tuple(mbs), frozenset(links), table, d.get("name", ""))


def load_network(path) -> Network:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise NetworkError(f"invalid JSON: {e}") from None
    return network_from_dict(d, path.parent)


def network_to_dict(net: Network) -> dict:
    def enc(v):
        if isinstance(v, frozenset):
            return [enc(x) for x in sorted(v, key=repr)]
        if isinstance(v, tuple):
            return [enc(x) for x in v]
        return v

    return {
        "name": net.name,
        "universe": {"addresses": list(net.universe.addresses), "ports": list(net.universe.ports),
                     "contents": list(net.universe.contents)},
        "hosts": [{"id": h.id, "address": h.address} for h in net.hosts],
        "middleboxes": [{"id": m.id, "model": m.model.name, "config": {k: enc(v) for k, v in m.config},
                         "class_hint": m.hint} for m in net.middleboxes],
        "links": sorted([a, b] for a, b in net.links if a < b),
        "forwarding": {
            "default": [{"node": n, "dst": d, "next": x} for n, d, x in net.forwarding.default],
            "scenarios": {k: [{"node": n, "dst": d, "next": x} for n, d, x in rs]
                          for k, rs in net.forwarding.scenarios},
        },
    }
