from dataclasses import replace

from numasched.policies import PolicyKind, build_priority_lists
from numasched.priority import PlacementPlan
from numasched.taskgen import gen_fib
from numasched.topology import Topology
from numasched.trace import BODY, SYNC, ExecutionTrace, TraceEntry, trace_check

# fib(2): task 0 spawns 1 and 2, then continues after its taskwait
G = gen_fib(2, cost=1)


def valid_trace():
    return ExecutionTrace(2, [
        [TraceEntry(0, BODY, 0, 0, 1), TraceEntry(1, BODY, 0, 2, 3), TraceEntry(0, SYNC, 0, 6, 7)],
        [TraceEntry(2, BODY, 1, 3, 5, stolen_from=0, probes=(0,), steal_end="back")],
    ])


def test_valid_trace_passes():
    ok, problems = trace_check(valid_trace(), G)
    assert ok and problems == []


def test_duplicate_is_named():
    tr = valid_trace()
    tr.logs[1].append(TraceEntry(1, BODY, 1, 6, 7))
    ok, problems = trace_check(tr, G)
    assert not ok
    assert any("task 1 body executed 2 times" in p for p in problems)


def test_continuation_before_child_finish_fails():
    tr = valid_trace()
    tr.logs[0][2] = TraceEntry(0, SYNC, 0, 4, 5)  # child 2 finishes at 5
    ok, problems = trace_check(tr, G)
    assert not ok and any("taskwait" in p for p in problems)


def test_missing_and_early_children():
    tr = valid_trace()
    del tr.logs[1][0]
    assert not trace_check(tr, G)[0]
    tr = valid_trace()
    tr.logs[1][0] = replace(tr.logs[1][0], start=0.5)
    ok, problems = trace_check(tr, G)
    assert not ok and any("before its parent" in p for p in problems)


def test_steal_discipline():
    tr = valid_trace()
    tr.logs[1][0] = replace(tr.logs[1][0], steal_end="front")
    assert not trace_check(tr, G)[0]
    tr = valid_trace()
    tr.logs[1][0] = replace(tr.logs[1][0], stolen_from=1, probes=(1,))
    assert not trace_check(tr, G)[0]
    ok, problems = trace_check(valid_trace(), G, kind=PolicyKind.BREADTH_FIRST)
    assert not ok and any("never steals" in p for p in problems)


def test_overlap_on_one_thread():
    tr = valid_trace()
    tr.logs[0][1] = TraceEntry(1, BODY, 0, 0.5, 3)
    assert not trace_check(tr, G)[0]


def test_dfwspt_probe_order_replayed():
    t = Topology.from_counts([1, 1, 1], [[0, 1, 2], [1, 0, 1], [2, 1, 0]])
    lists = build_priority_lists(PlacementPlan(0, (1, 2)), t)
    g = gen_fib(2, cost=1)
    good = ExecutionTrace(3, [
        [TraceEntry(0, BODY, 0, 0, 1), TraceEntry(1, BODY, 0, 2, 3), TraceEntry(0, SYNC, 0, 6, 7)],
        [],
        [TraceEntry(2, BODY, 2, 3, 5, stolen_from=0, probes=(1, 0), steal_end="back")],
    ])
    assert trace_check(good, g, lists, PolicyKind.DFWSPT)[0]
    bad = ExecutionTrace(3, [good.logs[0], [], [replace(good.logs[2][0], probes=(0,))]])
    ok, problems = trace_check(bad, g, lists, PolicyKind.DFWSPT)
    assert not ok and any("priority list" in p for p in problems)
    # from thread 2, thread 1 is one hop away and thread 0 two: skipping 1 breaks the tier rule
    ok, problems = trace_check(bad, g, lists, PolicyKind.DFWSRPT)
    assert not ok and any("farther tier" in p for p in problems)
