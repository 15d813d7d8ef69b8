"""Discrete-event simulation of a task graph on a NUMA machine.

Threads follow the chosen policy exactly: child-first policies run a spawned
child at once and park the parent's continuation at the front of the
owner's deque, idle threads sweep victims and take from the back; the
breadth-first policy feeds every spawned task through one FIFO. Memory is
homed page by page on first touch and every access is charged by the hop
distance between the executing core and the page's home node.
"""

from __future__ import annotations

import heapq
import json
import random
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .policies import PolicyKind, build_priority_lists, victim_sequence
from .priority import PlacementPlan
from .taskgen import TaskGraph
from .topology import Topology
from .trace import BODY, SYNC, ExecutionTrace, TraceEntry


class SimulationError(RuntimeError):
    pass


class MemoryExhausted(SimulationError):
    pass


@dataclass(frozen=True)
class LatencyModel:
    """Time charged for memory accesses and steal probes.

    ``numa_factor[h]`` multiplies the local per-page cost for a page ``h``
    hops away; distances past the end of the table reuse its last entry.
    A probe of a victim ``h`` hops away costs ``steal_base + steal_per_hop*h``.
    """

    local_access_cost: float = 1.0
    numa_factor: tuple[float, ...] = (1.0, 1.5, 2.0, 2.2)
    steal_base: float = 0.25
    steal_per_hop: float = 0.5
    idle_backoff: float = 2.0
    queue_cost: float = 0.0
    warm_discount: float = 0.0

    def __post_init__(self):
        f = tuple(float(x) for x in self.numa_factor)
        object.__setattr__(self, "numa_factor", f)
        if not f or f[0] != 1.0:
            raise ValueError("numa_factor must start at 1.0 for local access")
        if any(b < a for a, b in zip(f, f[1:])):
            raise ValueError("numa_factor must be non-decreasing in hops")
        for name in ("local_access_cost", "steal_base", "steal_per_hop", "queue_cost"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.idle_backoff <= 0:
            raise ValueError("idle_backoff must be > 0")
        if not 0.0 <= self.warm_discount < 1.0:
            raise ValueError("warm_discount must be in [0, 1)")

    def factor(self, hops: int) -> float:
        return self.numa_factor[min(hops, len(self.numa_factor) - 1)]

    def probe_cost(self, hops: int) -> float:
        return self.steal_base + self.steal_per_hop * hops


class PageTable:
    """First-touch page homes; a page's home never changes once set."""

    UNTOUCHED = -1

    def __init__(self, regions, t: Topology):
        self.topology = t
        self.homes = [np.full(r.size_pages, self.UNTOUCHED, dtype=np.int32) for r in regions]
        self.free = [n.memory_capacity_pages for n in t.nodes]
        self._fallback = [t.nodes_by_distance(i) for i in range(t.node_count)]

    def home(self, region: int, page: int) -> int | None:
        h = int(self.homes[region][page])
        return None if h == self.UNTOUCHED else h

    def touch(self, region: int, start: int, stop: int, node: int) -> np.ndarray:
        """Home untouched pages of ``[start, stop)`` and return the homes.

        Pages go to ``node`` while it has room, then to the nearest nodes
        with free capacity (ties by node id).
        """
        seg = self.homes[region][start:stop]
        fresh = np.flatnonzero(seg == self.UNTOUCHED)
        if fresh.size:
            pos = 0
            for nd in self._fallback[node]:
                take = min(self.free[nd], fresh.size - pos)
                if take > 0:
                    seg[fresh[pos : pos + take]] = nd
                    self.free[nd] -= take
                    pos += take
                if pos == fresh.size:
                    break
            if pos < fresh.size:
                raise MemoryExhausted(
                    f"no free memory for {fresh.size - pos} pages of region {region} on any node"
                )
        return seg


def first_touch(pt: PageTable, region: int, pages: tuple[int, int], toucher_node: int) -> np.ndarray:
    return pt.touch(region, pages[0], pages[1], toucher_node)


@dataclass
class SimReport:
    graph: str
    policy: str
    placement: str
    threads: int
    seed: int
    makespan: float
    busy: list[float]
    steal_time: list[float]
    idle: list[float]
    tasks_per_thread: list[int]
    steal_attempts: dict[int, int]
    steal_successes: dict[int, int]
    local_pages: int
    remote_pages: int
    remote_latency: float
    access_latency: float
    compute_time: float
    sweeps: int
    failed_sweeps: int
    trace: ExecutionTrace | None = field(default=None, repr=False, compare=False)

    @property
    def total_busy(self) -> float:
        return sum(self.busy)

    @property
    def remote_fraction(self) -> float:
        total = self.local_pages + self.remote_pages
        return self.remote_pages / total if total else 0.0

    @property
    def mean_probe_hops(self) -> float:
        n = sum(self.steal_attempts.values())
        return sum(h * c for h, c in self.steal_attempts.items()) / n if n else 0.0

    def steals_by_hop(self, max_hop: int = 3) -> list[int]:
        """Successful steals per hop distance, the last bucket holding >= max_hop."""
        out = [0] * (max_hop + 1)
        for h, c in self.steal_successes.items():
            out[min(h, max_hop)] += c
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("trace")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def summary(self) -> str:
        util = self.total_busy / (self.makespan * self.threads) if self.makespan else 0.0
        return (
            f"{self.graph} {self.policy}/{self.placement} threads={self.threads} seed={self.seed}\n"
            f"  makespan {self.makespan:.3f}  utilization {util:.1%}\n"
            f"  pages local {self.local_pages} remote {self.remote_pages} "
            f"(remote latency {self.remote_latency:.3f})\n"
            f"  steals {sum(self.steal_successes.values())}/{sum(self.steal_attempts.values())} "
            f"mean probe hops {self.mean_probe_hops:.3f}  sweeps {self.sweeps} (failed {self.failed_sweeps})"
        )


# work items and events
_TASK, _CONT, _POST = 0, 1, 2
_EV_DONE, _EV_PROBE, _EV_WAKE = 0, 1, 2


class _Simulation:
    def __init__(self, g, t, plan, kind, lm, seed, record_trace, check, init_node=None):
        g.validate()
        self.g, self.t, self.kind, self.lm = g, t, kind, lm
        self.tasks = g.tasks
        self.check = check
        cores = plan.cores
        self.P = P = len(cores)
        if len(set(cores)) != P:
            raise SimulationError("placement binds two threads to one core")
        self.node = [t.node_of(c) for c in cores]
        self.hops = [[t.distance[a][b] for b in self.node] for a in self.node]
        self.lists = build_priority_lists(plan, t)
        self.rngs = [random.Random(f"{seed}:{i}") for i in range(P)]
        self.child_first = kind.child_first

        n = len(g.tasks)
        self.pending = [0] * n
        self.wait_at = [-1] * n
        self.body_thread = [-1] * n
        self.sync_sets = [frozenset(x.sync_points) for x in g.tasks]
        self.deques = [deque() for _ in range(P)]
        self.shared = deque()
        self.queue_free = 0.0
        self.direct = [None] * P
        self.steal_mark = [None] * P
        self.remaining = n

        self.pt = PageTable(g.regions, t)
        nn = t.node_count
        self.cost_vec = [
            np.array([lm.local_access_cost * lm.factor(t.distance[a][b]) for b in range(nn)]) for a in range(nn)
        ]

        self.busy = [0.0] * P
        self.steal_time = [0.0] * P
        self.executed = [0] * P
        self.attempts: dict[int, int] = {}
        self.successes: dict[int, int] = {}
        self.local_pages = 0
        self.remote_pages = 0
        self.remote_latency = 0.0
        self.access_latency = 0.0
        self.compute_time = 0.0
        self.sweeps = 0
        self.failed = 0
        self.trace = ExecutionTrace(P) if record_trace else None
        self.events = []
        self.seq = 0
        self.running = [None] * P
        self.init_node = self.node[0] if init_node is None else init_node
        if not 0 <= self.init_node < nn:
            raise SimulationError(f"init node {init_node} outside 0..{nn - 1}")

    # -- event queue ---------------------------------------------------------

    def push(self, time, thread, kind, arg=None):
        self.seq += 1
        heapq.heappush(self.events, (time, thread, self.seq, kind, arg))

    # -- memory ------------------------------------------------------------

    def charge(self, accesses, thread, warm):
        node = self.node[thread]
        total = 0.0
        for a in accesses:
            homes = self.pt.touch(a.region, a.start, a.stop, node)
            counts = np.bincount(homes, minlength=len(self.cost_vec))
            cost = float(counts @ self.cost_vec[node])
            local = int(counts[node])
            local_cost = local * self.cost_vec[node][node]
            if warm:
                scale = 1.0 - self.lm.warm_discount
                cost *= scale
                local_cost *= scale
            if local < homes.size:
                self.remote_pages += int(homes.size) - local
                self.remote_latency += cost - local_cost
            self.local_pages += local
            total += cost
        self.access_latency += total
        return total

    # -- execution -----------------------------------------------------------

    def run(self):
        root = self.g.root
        for r in self.g.regions:
            if r.initialized_by_master:
                self.pt.touch(r.id, 0, r.size_pages, self.init_node)
        self.start_item(0, (_TASK, root), 0.0)
        for i in range(1, self.P):
            self.dispatch(i, 0.0)
        end = 0.0
        while self.remaining:
            if not self.events:
                raise SimulationError("simulation stalled with unfinished tasks")
            time, i, _, kind, arg = heapq.heappop(self.events)
            if kind == _EV_DONE:
                self.finish_item(i, arg, time)
                end = time
            elif kind == _EV_PROBE:
                self.probe(i, arg, time)
            else:
                self.dispatch(i, time)
        return end

    def dispatch(self, i, now):
        item = self.direct[i]
        self.direct[i] = None
        if item is None:
            if self.child_first:
                dq = self.deques[i]
                if dq:
                    item = dq.popleft()
            elif self.shared:
                item = self.shared.popleft()
                if self.lm.queue_cost:
                    self.queue_free = max(self.queue_free, now) + self.lm.queue_cost
                    now = self.queue_free
        if item is not None:
            self.start_item(i, item, now)
        elif self.child_first:
            self.start_sweep(i, now)
        else:
            self.push(now + self.lm.idle_backoff, i, _EV_WAKE)

    def start_item(self, i, item, now):
        tasks = self.tasks
        if item[0] == _CONT:
            _, tid, k = item
            task = tasks[tid]
            self.pending[tid] += 1
            nk = k + 1
            if nk < len(task.children) and nk not in self.sync_sets[tid]:
                self.deques[i].appendleft((_CONT, tid, nk))
            elif nk == len(task.children) and not task.sync_after_children:
                self.complete(i, tid, now)
            else:
                self.wait_at[tid] = nk
            item = (_TASK, task.children[k])
        kind, tid = item[0], item[1]
        task = tasks[tid]
        if kind == _TASK:
            parent = task.parent
            warm = parent is not None and self.lm.warm_discount and self.body_thread[parent] == i
            self.body_thread[tid] = i
            cost, accesses = task.compute_cost, task.accesses
        else:
            warm = False
            cost, accesses = task.post_cost, task.post_accesses
        self.compute_time += cost
        dur = cost + (self.charge(accesses, i, warm) if accesses else 0.0)
        self.busy[i] += dur
        self.executed[i] += kind == _TASK
        self.running[i] = (kind, tid, now, self.steal_mark[i])
        self.steal_mark[i] = None
        self.push(now + dur, i, _EV_DONE, item)

    def finish_item(self, i, item, now):
        kind, tid = item[0], item[1]
        task = self.tasks[tid]
        run = self.running[i]
        self.running[i] = None
        if self.trace is not None:
            mark = run[3]
            self.trace.logs[i].append(
                TraceEntry(
                    tid, BODY if kind == _TASK else SYNC, i, run[2], now,
                    None if mark is None else mark[0],
                    () if mark is None else mark[1],
                    "" if mark is None else "back",
                )
            )
        if kind == _TASK and task.children:
            if self.child_first:
                self.direct[i] = (_CONT, tid, 0)
            else:
                self.spawn_group(i, tid, 0, now)
        else:
            self.complete(i, tid, now)
        if self.remaining:
            self.dispatch(i, now)

    def spawn_group(self, i, tid, start, now):
        task = self.tasks[tid]
        stop = next((s for s in task.sync_points if s > start), len(task.children))
        self.pending[tid] += stop - start
        self.shared.extend((_TASK, c) for c in task.children[start:stop])
        if stop == len(task.children) and not task.sync_after_children:
            self.complete(i, tid, now)
        else:
            self.wait_at[tid] = stop

    def complete(self, i, tid, now):
        self.remaining -= 1
        parent = self.tasks[tid].parent
        if parent is None:
            return
        self.pending[parent] -= 1
        w = self.wait_at[parent]
        if self.pending[parent] == 0 and w >= 0:
            self.wait_at[parent] = -1
            ptask = self.tasks[parent]
            if w == len(ptask.children):
                self.hand_over(i, (_POST, parent))
            elif self.child_first:
                self.hand_over(i, (_CONT, parent, w))
            else:
                self.spawn_group(i, parent, w, now)

    def hand_over(self, i, item):
        """Make ``item`` the next thing thread ``i`` runs."""
        if self.direct[i] is None:
            self.direct[i] = item
        elif self.child_first:
            # only reachable through tasks without a final taskwait
            self.deques[i].appendleft(item)
        else:
            self.shared.appendleft(item)

    # -- stealing ------------------------------------------------------------

    def start_sweep(self, i, now):
        if self.check and (self.deques[i] or self.direct[i] is not None):
            raise SimulationError(f"thread {i} went stealing with local work")
        seq = victim_sequence(self.kind, i, self.lists, self.rngs[i])
        if not seq:
            return
        self.sweeps += 1
        self.push(now + self.lm.probe_cost(self.hops[i][seq[0]]), i, _EV_PROBE, (seq, 0))

    def probe(self, i, arg, now):
        seq, idx = arg
        victim = seq[idx]
        h = self.hops[i][victim]
        self.attempts[h] = self.attempts.get(h, 0) + 1
        self.steal_time[i] += self.lm.probe_cost(h)
        dq = self.deques[victim]
        if dq:
            item = dq.pop()
            self.successes[h] = self.successes.get(h, 0) + 1
            self.steal_mark[i] = (victim, tuple(seq[: idx + 1]))
            self.start_item(i, item, now)
        elif idx + 1 < len(seq):
            nxt = seq[idx + 1]
            self.push(now + self.lm.probe_cost(self.hops[i][nxt]), i, _EV_PROBE, (seq, idx + 1))
        else:
            self.failed += 1
            self.push(now + self.lm.idle_backoff, i, _EV_WAKE)


def simulate(
    g: TaskGraph,
    t: Topology,
    plan: PlacementPlan,
    kind: PolicyKind,
    lm: LatencyModel | None = None,
    seed: int = 0,
    record_trace: bool = True,
    check: bool = False,
    init_node: int | None = None,
) -> SimReport:
    """Run ``g`` on ``t`` with thread ``i`` bound to ``plan.cores[i]``.

    The master (thread 0) first touches every master-initialized region,
    then runs the root. ``init_node`` makes that initialization happen on
    another node instead, as if an earlier phase had placed the data.
    The result is a pure function of the arguments. ``check`` turns on
    internal invariant assertions.
    """
    if isinstance(kind, str):
        kind = PolicyKind.parse(kind)
    lm = lm or LatencyModel()
    sim = _Simulation(g, t, plan, kind, lm, seed, record_trace, check, init_node)
    makespan = sim.run()
    steal = sim.steal_time
    idle = [max(0.0, makespan - b - s) for b, s in zip(sim.busy, steal)]
    return SimReport(
        graph=g.fingerprint,
        policy=kind.value,
        placement=plan.mode,
        threads=sim.P,
        seed=seed,
        makespan=makespan,
        busy=sim.busy,
        steal_time=steal,
        idle=idle,
        tasks_per_thread=sim.executed,
        steal_attempts=dict(sorted(sim.attempts.items())),
        steal_successes=dict(sorted(sim.successes.items())),
        local_pages=sim.local_pages,
        remote_pages=sim.remote_pages,
        remote_latency=sim.remote_latency,
        access_latency=sim.access_latency,
        compute_time=sim.compute_time,
        sweeps=sim.sweeps,
        failed_sweeps=sim.failed,
        trace=sim.trace,
    )


def serial_cost(g: TaskGraph, lm: LatencyModel | None = None) -> float:
    """Work of the whole graph with every access local."""
    lm = lm or LatencyModel()
    pages = sum(a.pages for task in g.tasks for a in (*task.accesses, *task.post_accesses))
    return g.work() + pages * lm.local_access_cost
