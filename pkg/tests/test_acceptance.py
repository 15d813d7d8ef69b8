"""Acceptance criteria 1-10, one PASS/FAIL line each.

Run with pytest, or directly: ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import os
import random
import subprocess
import sys
import tempfile
import time
from collections import Counter
from functools import lru_cache
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from numasched.executor import run_graph  # noqa: E402
from numasched.policies import PolicyKind, build_priority_lists, victim_sequence  # noqa: E402
from numasched.priority import PlacementPlan, WeightVector, compute_priorities, make_placement  # noqa: E402
from numasched.sim import serial_cost, simulate  # noqa: E402
from numasched.taskgen import gen_fib, gen_graph  # noqa: E402
from numasched.topology import Topology, builtin_topology  # noqa: E402
from numasched.trace import trace_check  # noqa: E402
from oracles import brute_priorities, core_nodes, fib_call_count, random_topology_spec  # noqa: E402

X4600 = builtin_topology("x4600_like")
SEEDS = range(30)
DATA_GRAPHS = ("fft", "strassen", "sort")
STEALERS = ("wf", "dfwspt", "dfwsrpt")


def _random_weights(rng: random.Random, depth: int) -> WeightVector:
    steps = [rng.randint(1, 1000) for _ in range(depth + 1)]
    return WeightVector(tuple(sum(steps[i:]) for i in range(depth + 1)))


# 1 ---------------------------------------------------------------------------
def check_1():
    start = time.perf_counter()
    rng = random.Random(2024)
    mismatches = 0
    for _ in range(200):
        counts, dist = random_topology_spec(rng, max_nodes=16, max_cores=64, max_hops=4)
        t = Topology.from_counts(counts, dist)
        w = _random_weights(rng, t.max_numa_distance)
        pt = compute_priorities(t, w)
        v1, v2, final = brute_priorities(core_nodes(counts), dist, list(w.alpha))
        if (list(pt.v1), list(pt.v2), list(pt.final)) != (v1, v2, final):
            mismatches += 1
    elapsed = time.perf_counter() - start
    return mismatches == 0 and elapsed < 10, f"200 topologies, {mismatches} mismatches, {elapsed:.2f}s"


# 2 ---------------------------------------------------------------------------
@st.composite
def symmetric_machines(draw):
    """Circulant hop matrices (every row a rotation of one profile), relabelled."""
    n = draw(st.integers(1, 12))
    profile = [0] + [draw(st.integers(1, 5)) for _ in range(n // 2)]
    dist = [[profile[min((i - j) % n, (j - i) % n)] for j in range(n)] for i in range(n)]
    perm = draw(st.permutations(range(n)))
    dist = [[dist[perm[i]][perm[j]] for j in range(n)] for i in range(n)]
    per_node = draw(st.integers(1, 5))
    t = Topology.from_counts([per_node] * n, dist)
    steps = draw(st.lists(st.integers(1, 50), min_size=t.max_numa_distance + 1,
                          max_size=t.max_numa_distance + 1))
    w = WeightVector(tuple(sum(steps[i:]) for i in range(len(steps))))
    return t, w


def check_2():
    examples = 0

    @settings(max_examples=300, deadline=None, database=None)
    @given(symmetric_machines())
    def prop(machine):
        nonlocal examples
        t, w = machine
        rows = {tuple(sorted(r)) for r in t.distance}
        assert len(rows) == 1  # generator sanity: identical distance multisets
        examples += 1
        assert len(set(compute_priorities(t, w).final)) == 1

    try:
        prop()
    except AssertionError as exc:
        return False, f"counterexample: {exc}"
    return True, f"{examples} generated symmetric machines, all finals equal"


# 3 ---------------------------------------------------------------------------
def check_3():
    rng = random.Random(7)
    bad = checked = 0
    for _ in range(100):
        counts, dist = random_topology_spec(rng, max_nodes=8, max_cores=32, max_hops=4)
        t = Topology.from_counts(counts, dist)
        team = rng.randint(2, t.core_count) if t.core_count > 1 else 1
        cores = rng.sample(range(t.core_count), team)
        nodes = core_nodes(counts)
        lists = build_priority_lists(PlacementPlan(cores[0], tuple(cores[1:])), t)
        for me in range(team):
            expected = tuple(sorted((j for j in range(team) if j != me),
                                    key=lambda j: (dist[nodes[cores[me]]][nodes[cores[j]]], j)))
            got = victim_sequence(PolicyKind.DFWSPT, me, lists, random.Random(me))
            checked += 1
            bad += got != expected
    return bad == 0, f"100 placements, {checked} threads, {bad} mismatches"


# 4 ---------------------------------------------------------------------------
def check_4():
    t = Topology.from_counts([3, 3, 3], [[0, 1, 2], [1, 0, 1], [2, 1, 0]])
    plan = PlacementPlan(0, tuple(range(1, 9)))
    lists = build_priority_lists(plan, t)
    tiers = [set(m) for _, m in lists[0].tier_members()]
    assert [len(x) for x in tiers] == [2, 3, 3]
    violations = 0
    pos = [Counter() for _ in tiers]
    for seed in range(1000):
        seq = victim_sequence(PolicyKind.DFWSRPT, 0, lists, random.Random(seed))
        tier_of = [next(k for k, m in enumerate(tiers) if v in m) for v in seq]
        violations += tier_of != sorted(tier_of)
        offset = 0
        for k, members in enumerate(tiers):
            for p, v in enumerate(seq[offset:offset + len(members)]):
                pos[k][(p, v)] += 1
            offset += len(members)
    worst = 0.0
    for k, members in enumerate(tiers):
        for p in range(len(members)):
            for v in members:
                worst = max(worst, abs(pos[k][(p, v)] / 1000 - 1 / len(members)))
    ok = violations == 0 and worst <= 0.05
    return ok, f"1000 decisions, {violations} tier violations, max |freq - uniform| = {worst:.4f}"


# 5 ---------------------------------------------------------------------------
def check_5():
    graphs = {"fib(16)": gen_fib(16), "sort": gen_graph("sort"), "fft": gen_graph("fft")}
    failures = []
    runs = 0
    for label, g in graphs.items():
        for kind in PolicyKind:
            for team in (1, 2, 4, 8, 16):
                plan = make_placement(X4600, "numa", team)
                r = simulate(g, X4600, plan, kind, seed=team)
                ok, problems = trace_check(r.trace, g, build_priority_lists(plan, X4600), kind)
                runs += 1
                if not ok:
                    failures.append(f"{label}/{kind}/{team}: {problems[:2]}")
                if team == 1 and r.makespan != serial_cost(g):
                    failures.append(f"{label}/{kind}: serial makespan {r.makespan} != {serial_cost(g)}")
    return not failures, f"{runs} simulations, {len(failures)} failures" + (f": {failures[:3]}" if failures else "")


# 6 and 7 share runs ----------------------------------------------------------
@lru_cache(maxsize=None)
def _graph(name, seed):
    return gen_graph(name, seed=seed, jitter=0.2)


@lru_cache(maxsize=None)
def _run(name, seed, policy, placement):
    plan = make_placement(X4600, placement, 16, seed=seed)
    r = simulate(_graph(name, seed), X4600, plan, policy, seed=seed, record_trace=False)
    return r.makespan, r.remote_latency, r.mean_probe_hops


def check_6():
    ok, parts = True, []
    for name in DATA_GRAPHS:
        wins = 0
        for s in SEEDS:
            aware, naive = _run(name, s, "wf", "numa_aware"), _run(name, s, "wf", "naive_first_core")
            wins += aware[0] < naive[0] and aware[1] < naive[1]
        ok &= wins >= 0.9 * len(SEEDS)
        parts.append(f"{name} {wins}/{len(SEEDS)}")
    return ok, "numa_aware beats naive on makespan and remote latency: " + ", ".join(parts)


def check_7():
    ok, parts = True, []
    for name in DATA_GRAPHS:
        for pol in ("dfwspt", "dfwsrpt"):
            closer = sum(_run(name, s, pol, "numa_aware")[2] < _run(name, s, "wf", "numa_aware")[2] for s in SEEDS)
            ok &= closer == len(SEEDS)
            parts.append(f"{name}/{pol} hops {closer}/{len(SEEDS)}")
    for pol in ("dfwspt", "dfwsrpt"):
        faster = sum(_run("fft", s, pol, "numa_aware")[0] < _run("fft", s, "wf", "numa_aware")[0] for s in SEEDS)
        ok &= faster >= 0.8 * len(SEEDS)
        parts.append(f"fft/{pol} makespan {faster}/{len(SEEDS)}")
    return ok, ", ".join(parts)


# 8 ---------------------------------------------------------------------------
def check_8():
    ok, parts = True, []
    for name in ("fib", "nqueens"):
        worst = 0.0
        for s in SEEDS:
            g = gen_graph(name, seed=s, jitter=0.2)
            plan = make_placement(X4600, "numa", 16, seed=s)
            ms = [simulate(g, X4600, plan, k, seed=s, record_trace=False).makespan for k in STEALERS]
            worst = max(worst, max(ms) / min(ms) - 1)
        ok &= worst <= 0.05
        parts.append(f"{name} worst gap {worst:.2%}")
    return ok, ", ".join(parts) + f" over {len(SEEDS)} seeds"


# 9 ---------------------------------------------------------------------------
def check_9():
    rng = random.Random(99)
    kinds = list(PolicyKind)
    g15, g10 = gen_fib(15), gen_fib(10)
    failures = 0
    for i in range(500):
        kind, team = kinds[i % 4], 1 + (i // 4) % 16
        plan = make_placement(X4600, rng.choice(("numa", "naive")), team, seed=i)
        tr = run_graph(g15, plan, kind, seed=i, topology=X4600, yield_prob=rng.choice((0.0, 0.05, 0.3)))
        failures += not trace_check(tr, g15, build_priority_lists(plan, X4600), kind)[0]
    wrong_count = 0
    expected = fib_call_count(10)
    for i in range(100):
        kind, team = kinds[i % 4], 1 + i % 16
        tr = run_graph(g10, make_placement(X4600, "numa", team, seed=i), kind, seed=i, topology=X4600)
        bodies = sorted(e.task for e in tr.entries() if e.phase == "body")
        wrong_count += bodies != list(range(expected))
    ok = failures == 0 and wrong_count == 0
    return ok, f"500 fib(15) stress runs, {failures} trace failures; 100 fib(10) runs, {wrong_count} not {expected} tasks"


# 10 --------------------------------------------------------------------------
CONFIG = """\
[experiment]
topology = x4600_like
benchmark = fft
scale = {"points": 8192, "leaf": 64}
jitter = 0.1
seed = 3
repetitions = 2

[sweep]
policies = bf, wf, dfwspt, dfwsrpt
placements = numa, naive
threads = 1, 4, 16
"""


def check_10():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "exp.ini"
        cfg.write_text(CONFIG)
        outputs = []
        for hashseed in ("1", "2"):
            out = Path(tmp) / f"run{hashseed}.csv"
            env = dict(os.environ, PYTHONHASHSEED=hashseed)
            res = subprocess.run([sys.executable, "-m", "numasched", "--config", str(cfg), "--out", str(out)],
                                 env=env, capture_output=True, text=True)
            if res.returncode != 0:
                return False, f"run failed: {res.stderr.strip()}"
            outputs.append(out.read_bytes())
    same = outputs[0] == outputs[1]
    rows = outputs[0].decode().count("\n") - 2
    return same, f"two runs, {rows} rows, byte-identical={same}"


CHECKS = [check_1, check_2, check_3, check_4, check_5, check_6, check_7, check_8, check_9, check_10]


def _report(n, ok, detail):
    return f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


@pytest.mark.parametrize("n", range(1, 11))
def test_criterion(n, capsys):
    ok, detail = CHECKS[n - 1]()
    with capsys.disabled():
        print("\n" + _report(n, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    results = []
    for n, check in enumerate(CHECKS, start=1):
        ok, detail = check()
        results.append(ok)
        print(_report(n, ok, detail), flush=True)
    sys.exit(0 if all(results) else 1)
