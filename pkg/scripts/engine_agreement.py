"""Compare the explicit-state search with the bounded SMT encoding (and,
where it applies, the causal encoding) on seeded random networks."""
from __future__ import annotations

import argparse
import time
from dataclasses import dataclass

from mboxverify.bmc import Bounds, explore, replay
from mboxverify.scenarios import load_scenario
from mboxverify.smt import (RestrictionViolated, Sat, Unsat, check_restrictions, decode_trace, encode_bounded,
                            encode_causal, run_solver)


@dataclass
class Config:
    scenario: str = "random_mixed"
    seeds: int = 20
    depth: int = 5
    nat_depth: int = 4
    max_emits: int = 3
    solver: str | None = None
    timeout: float = 120.0


def _kind(out):
    return "violated" if isinstance(out, Sat) else "holds" if isinstance(out, Unsat) else "unknown"


def run(cfg: Config):
    print(f"{'seed':>4} {'bmc':>9} {'bounded':>9} {'causal':>9} {'replay':>6} {'t_bmc':>7} {'t_smt':>7}")
    agree = 0
    for seed in range(cfg.seeds):
        s = load_scenario(cfg.scenario, seed=seed)
        inv = s.invariants[0]
        nat = any(m.type_name == "nat" for m in s.net.middleboxes)
        K = cfg.nat_depth if nat else cfg.depth
        b = Bounds(depth=K, max_emits=cfg.max_emits)
        t0 = time.perf_counter()
        ref = explore(s.net, inv, b).kind
        t1 = time.perf_counter()
        script = encode_bounded(s.net, inv, K, b)
        out = run_solver(script.text, cfg.solver, cfg.timeout)
        t2 = time.perf_counter()
        rp = ""
        if isinstance(out, Sat):
            rp = "yes" if replay(s.net, decode_trace(out, s.net, inv, script), inv) else "NO"
        try:
            check_restrictions(s.net, inv)
            causal = _kind(run_solver(encode_causal(s.net, inv).text, cfg.solver, cfg.timeout))
            causal = {"violated": "sat?", "holds": "proved"}.get(causal, causal)
        except RestrictionViolated as e:
            causal = "n/a:" + {"supported-state": "state", "failure-free": "fail",
                               "finite-sends": "sends", "finite-delivery": "loop"}.get(e.criterion, "?")
        agree += ref == _kind(out)
        print(f"{seed:>4} {ref:>9} {_kind(out):>9} {causal:>9} {rp:>6} {t1 - t0:7.2f} {t2 - t1:7.2f}")
    print(f"agreement {agree}/{cfg.seeds}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default=Config.scenario, choices=["random_mixed", "random_flow_parallel"])
    ap.add_argument("--seeds", type=int, default=Config.seeds)
    ap.add_argument("--depth", type=int, default=Config.depth)
    ap.add_argument("--nat-depth", type=int, default=Config.nat_depth)
    ap.add_argument("--max-emits", type=int, default=Config.max_emits)
    ap.add_argument("--solver-cmd")
    a = ap.parse_args()
    run(Config(a.scenario, a.seeds, a.depth, a.nat_depth, a.max_emits, a.solver_cmd))
