import json

import pytest
from hypothesis import given, settings, strategies as st

from mboxverify.scenarios import SCENARIOS, gen_scenario, load_scenario


@pytest.mark.parametrize("name", sorted(set(SCENARIOS) - {"random_flow_parallel", "random_mixed"}))
def test_generation_is_deterministic(name):
    assert json.dumps(gen_scenario(name)) == json.dumps(gen_scenario(name))


@given(st.integers(0, 10**6), st.sampled_from(["random_flow_parallel", "random_mixed"]))
@settings(max_examples=25, deadline=None)
def test_random_generators_seeded_and_loadable(seed, name):
    assert gen_scenario(name, seed=seed) == gen_scenario(name, seed=seed)
    s = load_scenario(name, seed=seed)
    assert s.invariants and s.net.transfer() is not None


@pytest.mark.parametrize("n", [3, 6, 9])
def test_enterprise_roles(n):
    nd, invs = gen_scenario("enterprise", subnets=n)
    acl = {tuple(r) for r in nd["middleboxes"][1]["config"]["acl"]}
    public = {h for x, h in acl if x == "x"}
    assert len(public) == n // 3
    assert len([i for i in invs if i["name"].startswith("quarantine-in")]) == n // 3
    assert {i["type"] for i in invs} == {"simple-isolation", "flow-isolation"}


def test_enterprise_delete_rule_opens_a_quarantined_subnet():
    good = {tuple(r) for r in gen_scenario("enterprise")[0]["middleboxes"][1]["config"]["acl"]}
    bad = {tuple(r) for r in gen_scenario("enterprise", delete_rule=1)[0]["middleboxes"][1]["config"]["acl"]}
    assert len(bad - good) == 1 and good < bad


def test_multi_tenant_shape():
    nd, invs = gen_scenario("multi_tenant", tenants=4)
    assert len(nd["hosts"]) == 4 * 10
    assert sum("pub" in h["id"].lower() for h in nd["hosts"]) == 20
    assert len(invs) == 3 * 4 * 3


def test_redundant_backup_differs_only_when_broken():
    ok, _ = gen_scenario("redundant")
    bad, _ = gen_scenario("redundant", break_backup=True)
    acl = lambda d, i: {tuple(r) for r in d["middleboxes"][i]["config"]["acl"]}  # noqa: E731
    assert acl(ok, 0) == acl(ok, 1)
    assert acl(bad, 1) - acl(bad, 0) == {("x", "q")}


@pytest.mark.parametrize("bad", [dict(subnets=2), dict(nonsense=1)])
def test_invalid_params(bad):
    with pytest.raises(ValueError):
        gen_scenario("enterprise", **bad)


def test_unknown_scenario():
    with pytest.raises(ValueError):
        gen_scenario("moon")
