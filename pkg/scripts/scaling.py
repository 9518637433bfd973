"""Verification time vs. network size for the enterprise scenario, with and
without slicing.  Prints one CSV row per (subnets, mode)."""
from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import dataclass

from mboxverify.bmc import Bounds, explore
from mboxverify.scenarios import load_scenario
from mboxverify.slicer import build_slice, restrict


@dataclass
class Config:
    sizes: tuple = (3, 6, 12, 30, 100, 300)
    depth: int = 8
    full_up_to: int = 3  # the whole enterprise-6 network already hits the node cap
    delete_rule: int = 0


def run(cfg: Config):
    w = csv.writer(sys.stdout)
    w.writerow(["subnets", "mode", "nodes", "verdict", "seconds"])
    for n in cfg.sizes:
        s = load_scenario("enterprise", subnets=n, delete_rule=cfg.delete_rule)
        inv = next(i for i in s.invariants if i.name.startswith("quarantine-in"))
        sl = build_slice(s.net, inv)
        modes = [("slice", restrict(s.net, sl), len(sl.nodes))]
        if n <= cfg.full_up_to:
            modes.append(("full", s.net, len(s.net.node_ids)))
        for mode, net, size in modes:
            t0 = time.perf_counter()
            v = explore(net, inv, Bounds(depth=cfg.depth))
            w.writerow([n, mode, size, v.kind,
                        f"{time.perf_counter() - t0:.4f}"])
            sys.stdout.flush()


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=list(Config.sizes))
    ap.add_argument("--depth", type=int, default=Config.depth)
    ap.add_argument("--full-up-to", type=int, default=Config.full_up_to)
    ap.add_argument("--delete-rule", type=int, default=0)
    a = ap.parse_args()
    run(Config(tuple(a.sizes), a.depth, a.full_up_to, a.delete_rule))
