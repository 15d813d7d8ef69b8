"""Native work-stealing pool running task graphs as busy-loop stubs.

Workers follow the same policy objects as the simulator: a child-first
thread runs the spawned child and parks the parent's continuation at the
front of its own deque, thieves take from the back in the order
``victim_sequence`` dictates; breadth-first threads share one FIFO.
Timestamps in the trace come from a global logical clock, so ordering
checks do not depend on wall-clock resolution.
"""

from __future__ import annotations

import itertools
import os
import random
import threading
import time
import warnings
from collections import deque

from .policies import PolicyKind, build_priority_lists, victim_sequence
from .priority import PlacementPlan
from .taskgen import TaskGraph
from .topology import Topology
from .trace import BODY, SYNC, ExecutionTrace, TraceEntry

_TASK, _CONT, _POST = 0, 1, 2


class ExecutorError(RuntimeError):
    pass


class PinningWarning(RuntimeWarning):
    pass


class WorkerDeque:
    """Lock-protected double-ended queue: the owner uses the front, thieves the back."""

    def __init__(self):
        self._items = deque()
        self._lock = threading.Lock()

    def push_front(self, item) -> None:
        with self._lock:
            self._items.appendleft(item)

    def push_back(self, item) -> None:
        with self._lock:
            self._items.append(item)

    def pop_front(self):
        with self._lock:
            return self._items.popleft() if self._items else None

    def steal_back(self):
        with self._lock:
            return self._items.pop() if self._items else None

    def __len__(self):
        with self._lock:
            return len(self._items)


def pinning_supported() -> bool:
    return hasattr(os, "sched_setaffinity") and hasattr(os, "sched_getaffinity")


def _spin(n: int) -> int:
    acc = 0
    for k in range(n):
        acc ^= k
    return acc


class _Pool:
    def __init__(self, g, plan, kind, t, seed, work_scale, backoff, yield_prob):
        self.g = g
        self.tasks = g.tasks
        self.kind = kind
        self.child_first = kind.child_first
        self.P = P = plan.team_size
        self.cores = plan.cores
        self.lists = build_priority_lists(plan, t) if t is not None else _flat_lists(P)
        self.rngs = [random.Random(f"{seed}:{i}") for i in range(P)]
        self.work_scale = work_scale
        self.backoff = backoff
        self.yield_prob = yield_prob

        n = len(g.tasks)
        self.pending = [0] * n
        self.wait_at = [-1] * n
        self.sync_sets = [frozenset(x.sync_points) for x in g.tasks]
        self.remaining = n
        self.join_lock = threading.Lock()
        self.deques = [WorkerDeque() for _ in range(P)]
        self.shared = WorkerDeque()
        self.direct = [None] * P
        self.done = threading.Event()
        self.clock = itertools.count()
        self.clock_lock = threading.Lock()
        self.logs = [[] for _ in range(P)]
        self.errors: list[BaseException] = []
        self.pinned = [False] * P

    def stamp(self) -> int:
        with self.clock_lock:
            return next(self.clock)

    # -- join bookkeeping (caller holds join_lock) ---------------------------

    def complete(self, i, tid):
        self.remaining -= 1
        if self.remaining == 0:
            self.done.set()
        parent = self.tasks[tid].parent
        if parent is None:
            return
        self.pending[parent] -= 1
        w = self.wait_at[parent]
        if self.pending[parent] == 0 and w >= 0:
            self.wait_at[parent] = -1
            if w == len(self.tasks[parent].children):
                self.hand_over(i, (_POST, parent))
            elif self.child_first:
                self.hand_over(i, (_CONT, parent, w))
            else:
                self.spawn_group(i, parent, w)

    def hand_over(self, i, item):
        if self.direct[i] is None:
            self.direct[i] = item
        elif self.child_first:
            self.deques[i].push_front(item)
        else:
            self.shared.push_front(item)

    def spawn_group(self, i, tid, start):
        task = self.tasks[tid]
        stop = next((s for s in task.sync_points if s > start), len(task.children))
        self.pending[tid] += stop - start
        if stop == len(task.children) and not task.sync_after_children:
            self.complete(i, tid)
        else:
            self.wait_at[tid] = stop
        for c in task.children[start:stop]:
            self.shared.push_back((_TASK, c))

    # -- execution -----------------------------------------------------------

    def execute(self, i, item, mark):
        tasks = self.tasks
        if item[0] == _CONT:
            _, tid, k = item
            task = tasks[tid]
            with self.join_lock:
                self.pending[tid] += 1
                nk = k + 1
                if nk < len(task.children) and nk not in self.sync_sets[tid]:
                    self.deques[i].push_front((_CONT, tid, nk))
                elif nk == len(task.children) and not task.sync_after_children:
                    self.complete(i, tid)
                else:
                    self.wait_at[tid] = nk
            item = (_TASK, task.children[k])
        kind, tid = item[0], item[1]
        task = tasks[tid]
        cost = task.compute_cost if kind == _TASK else task.post_cost
        start = self.stamp()
        _spin(int(cost * self.work_scale))
        finish = self.stamp()
        self.logs[i].append(
            TraceEntry(
                tid, BODY if kind == _TASK else SYNC, i, start, finish,
                None if mark is None else mark[0],
                () if mark is None else mark[1],
                "" if mark is None else "back",
            )
        )
        if kind == _TASK and task.children:
            if self.child_first:
                self.direct[i] = (_CONT, tid, 0)
            else:
                with self.join_lock:
                    self.spawn_group(i, tid, 0)
        else:
            with self.join_lock:
                self.complete(i, tid)

    def sweep(self, i):
        seq = victim_sequence(self.kind, i, self.lists, self.rngs[i])
        for idx, victim in enumerate(seq):
            item = self.deques[victim].steal_back()
            if item is not None:
                return item, (victim, tuple(seq[: idx + 1]))
        return None, None

    def next_item(self, i):
        item = self.direct[i]
        if item is not None:
            self.direct[i] = None
            return item, None
        if self.child_first:
            item = self.deques[i].pop_front()
            if item is not None:
                return item, None
            return self.sweep(i)
        return self.shared.pop_front(), None

    def worker(self, i, pin):
        try:
            if pin:
                self.pinned[i] = _pin(self.cores[i])
            rng = self.rngs[i]
            if i == 0:
                self.direct[0] = (_TASK, self.g.root)
            while not self.done.is_set():
                if self.yield_prob and rng.random() < self.yield_prob:
                    time.sleep(0)
                item, mark = self.next_item(i)
                if item is None:
                    time.sleep(self.backoff)
                    continue
                self.execute(i, item, mark)
        except BaseException as exc:  # surfaced by run_graph
            self.errors.append(exc)
            self.done.set()


def _flat_lists(P):
    plan = PlacementPlan(0, tuple(range(1, P)))
    return build_priority_lists(plan, Topology.uniform(1, P, hops=1))


def _pin(core: int) -> bool:
    if not pinning_supported():
        return False
    try:
        if core not in os.sched_getaffinity(0):
            return False
        os.sched_setaffinity(0, {core})
        return True
    except OSError:
        return False


def run_graph(
    g: TaskGraph,
    plan: PlacementPlan,
    kind: PolicyKind | str,
    pin: bool = False,
    seed: int = 0,
    topology: Topology | None = None,
    work_scale: int = 20,
    backoff: float = 1e-5,
    yield_prob: float = 0.0,
    timeout: float = 120.0,
) -> ExecutionTrace:
    """Execute ``g`` on ``plan.team_size`` OS threads and return the trace.

    ``topology`` supplies hop distances for the victim lists; without it
    every thread is treated as equidistant. Each cost unit spins
    ``work_scale`` loop iterations. With ``pin`` each worker tries to bind to
    its plan core; if the host cannot, a ``PinningWarning`` is issued and the
    run continues unpinned.
    """
    if isinstance(kind, str):
        kind = PolicyKind.parse(kind)
    g.validate()
    if plan.team_size < 1:
        raise ExecutorError("team needs at least one thread")
    pool = _Pool(g, plan, kind, topology, seed, work_scale, backoff, yield_prob)
    threads = [
        threading.Thread(target=pool.worker, args=(i, pin), name=f"worker-{i}", daemon=True)
        for i in range(pool.P)
    ]
    t0 = time.perf_counter()
    for th in threads:
        th.start()
    finished = pool.done.wait(timeout)
    pool.done.set()
    for th in threads:
        th.join(timeout=5.0)
    wall = time.perf_counter() - t0
    if pool.errors:
        raise ExecutorError(f"worker failed: {pool.errors[0]!r}") from pool.errors[0]
    if not finished:
        raise ExecutorError(f"run did not finish within {timeout}s ({pool.remaining} tasks left)")
    pinned = pin and all(pool.pinned)
    if pin and not pinned:
        warnings.warn(
            "thread pinning unavailable for some plan cores on this host; ran unpinned",
            PinningWarning,
            stacklevel=2,
        )
    return ExecutionTrace(pool.P, pool.logs, wall_time=wall, pinned=pinned)
