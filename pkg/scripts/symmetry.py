"""Symmetry-group counts and per-representative verification time for the
multi-tenant scenario as the tenant count grows."""
from __future__ import annotations

import argparse
import time
from dataclasses import dataclass

from mboxverify.bmc import Bounds, explore
from mboxverify.invariants import symmetry_groups
from mboxverify.scenarios import load_scenario
from mboxverify.slicer import build_slice, policy_partition, restrict


@dataclass
class Config:
    tenants: tuple = (4, 8, 16, 32, 64)
    depth: int = 6


def run(cfg: Config):
    print(f"{'tenants':>7} {'invariants':>10} {'groups':>6} {'t_group':>8} {'t_verify':>8}  verdicts")
    for T in cfg.tenants:
        s = load_scenario("multi_tenant", tenants=T)
        t0 = time.perf_counter()
        groups = symmetry_groups(list(s.invariants), policy_partition(s.net), s.net)
        t1 = time.perf_counter()
        kinds = []
        for g in groups:
            inv = g.representative
            kinds.append(f"{inv.name.split('-')[0]}={explore(restrict(s.net, build_slice(s.net, inv)), inv, Bounds(depth=cfg.depth)).kind}")
        t2 = time.perf_counter()
        print(f"{T:>7} {len(s.invariants):>10} {len(groups):>6} {t1 - t0:8.2f} {t2 - t1:8.2f}  {' '.join(kinds)}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--tenants", type=int, nargs="+", default=list(Config.tenants))
    ap.add_argument("--depth", type=int, default=Config.depth)
    a = ap.parse_args()
    run(Config(tuple(a.tenants), a.depth))
