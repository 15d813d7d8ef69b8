"""Execution traces shared by the simulator and the native executor."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .policies import PolicyKind, PriorityList
from .taskgen import TaskGraph

BODY = "body"
SYNC = "sync"


@dataclass(frozen=True)
class TraceEntry:
    """One executed piece of a task on one thread.

    ``phase`` is ``"body"`` or ``"sync"`` (the post-taskwait continuation).
    ``stolen_from`` is set when the work was obtained by stealing; ``probes``
    are the victims checked in that sweep, the last one being the source.
    """

    task: int
    phase: str
    thread: int
    start: float
    finish: float
    stolen_from: int | None = None
    probes: tuple[int, ...] = ()
    steal_end: str = ""


@dataclass
class ExecutionTrace:
    """Per-thread ordered logs. Native runs also record wall time and whether
    every worker ended up affinity-bound."""

    threads: int
    logs: list[list[TraceEntry]] = field(default_factory=list)
    wall_time: float = 0.0
    pinned: bool = False

    def __post_init__(self):
        if not self.logs:
            self.logs = [[] for _ in range(self.threads)]

    def entries(self):
        for log in self.logs:
            yield from log

    def steals(self) -> list[TraceEntry]:
        return [e for e in self.entries() if e.stolen_from is not None]

    def body_order(self, thread: int = 0) -> list[int]:
        return [e.task for e in self.logs[thread] if e.phase == BODY]

    def __len__(self):
        return sum(len(log) for log in self.logs)


def trace_check(
    tr: ExecutionTrace,
    g: TaskGraph,
    lists: list[PriorityList] | None = None,
    kind: PolicyKind | None = None,
) -> tuple[bool, list[str]]:
    """Validate exactly-once execution, fork-join ordering and steal discipline.

    With ``lists`` and ``kind`` the recorded probe sequences are also replayed
    against the policy: DFWSPT must follow the priority list, DFWSRPT must not
    skip ahead to a farther tier, breadth-first never steals.
    """
    problems: list[str] = []
    n = len(g.tasks)
    bodies: dict[int, TraceEntry] = {}
    syncs: dict[int, TraceEntry] = {}
    seen = Counter()

    for thread, log in enumerate(tr.logs):
        last_finish = None
        for e in log:
            if e.thread != thread:
                problems.append(f"entry for task {e.task} logged under thread {thread} but ran on {e.thread}")
            if e.finish < e.start:
                problems.append(f"task {e.task} {e.phase} finishes before it starts")
            if last_finish is not None and e.start < last_finish:
                problems.append(f"thread {thread} overlaps task {e.task} with its previous entry")
            last_finish = e.finish
            if not 0 <= e.task < n:
                problems.append(f"unknown task id {e.task}")
                continue
            seen[(e.task, e.phase)] += 1
            (bodies if e.phase == BODY else syncs)[e.task] = e

    for (tid, phase), count in sorted(seen.items()):
        if count > 1:
            problems.append(f"task {tid} {phase} executed {count} times")
    for t in g.tasks:
        if t.id not in bodies:
            problems.append(f"task {t.id} body never executed")
        if t.has_sync and t.id not in syncs:
            problems.append(f"task {t.id} sync continuation never executed")
        if not t.has_sync and t.id in syncs:
            problems.append(f"task {t.id} has no taskwait but logged a sync continuation")
    if problems:
        return False, problems

    def done(tid):
        return syncs[tid].finish if tid in syncs else bodies[tid].finish

    for t in g.tasks:
        body = bodies[t.id]
        groups = t.groups()
        gate = body.finish
        for gi, group in enumerate(groups):
            for c in group:
                if bodies[c].start < gate:
                    problems.append(f"task {c} started before its parent {t.id} could spawn it")
            waits = gi < len(groups) - 1 or t.sync_after_children
            if waits and group:
                gate = max(gate, max(done(c) for c in group))
        if t.has_sync and syncs[t.id].start < gate:
            problems.append(f"task {t.id} continued past taskwait before its children finished")

    tiers = None
    if lists is not None:
        tiers = [{tid: h for tid, h in zip(pl.order, pl.hops)} for pl in lists]
    for e in tr.steals():
        if e.stolen_from == e.thread or not 0 <= e.stolen_from < tr.threads:
            problems.append(f"task {e.task}: invalid steal source {e.stolen_from} for thread {e.thread}")
            continue
        if e.steal_end and e.steal_end != "back":
            problems.append(f"task {e.task} was stolen from the {e.steal_end} of a deque")
        if e.probes:
            if e.probes[-1] != e.stolen_from:
                problems.append(f"task {e.task}: last probe {e.probes[-1]} is not the source {e.stolen_from}")
            if len(set(e.probes)) != len(e.probes) or e.thread in e.probes:
                problems.append(f"task {e.task}: probe sequence {e.probes} repeats or includes the thief")
        if kind is PolicyKind.BREADTH_FIRST:
            problems.append(f"task {e.task}: breadth-first scheduling never steals")
        elif kind is PolicyKind.DFWSPT and lists is not None and e.probes:
            expected = lists[e.thread].order[: len(e.probes)]
            if tuple(e.probes) != expected:
                problems.append(f"task {e.task}: probes {e.probes} deviate from priority list {expected}")
        elif kind is PolicyKind.DFWSRPT and tiers is not None and e.probes:
            hops = [tiers[e.thread][v] for v in e.probes]
            nearer = {v for v, h in tiers[e.thread].items() if h < hops[-1]}
            if hops != sorted(hops) or not nearer <= set(e.probes):
                problems.append(f"task {e.task}: probes {e.probes} visit a farther tier first")
    return not problems, problems
