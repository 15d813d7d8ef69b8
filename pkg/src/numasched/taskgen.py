"""Synthetic fork-join task graphs shaped after the BOTS benchmarks.

Task ids are assigned in spawn-order preorder, so iterating tasks by id is
the serial depth-first execution order. A task runs its body (compute cost
plus page accesses), then spawns its children one by one. ``sync_points``
lists child indices that must wait for every earlier child (a taskwait in
the middle of the spawn loop); ``sync_after_children`` is the final
taskwait, after which the optional post-sync work runs.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field
from typing import NamedTuple

BENCHMARKS = ("fib", "nqueens", "sort", "fft", "strassen", "sparselu")


class GraphError(ValueError):
    pass


class Access(NamedTuple):
    region: int
    start: int
    stop: int
    write: bool = False

    @property
    def pages(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class DataRegion:
    id: int
    name: str
    size_pages: int
    initialized_by_master: bool = False


@dataclass(slots=True)
class TaskNode:
    id: int
    parent: int | None
    children: list[int] = field(default_factory=list)
    compute_cost: float = 0.0
    accesses: tuple[Access, ...] = ()
    sync_after_children: bool = True
    sync_points: tuple[int, ...] = ()
    post_cost: float = 0.0
    post_accesses: tuple[Access, ...] = ()
    kind: str = ""

    @property
    def has_sync(self) -> bool:
        """True when the task runs a post-sync continuation."""
        return bool(self.children) and self.sync_after_children

    def groups(self):
        """Children split at the sync points, in spawn order."""
        bounds = [0, *self.sync_points, len(self.children)]
        return [self.children[a:b] for a, b in zip(bounds, bounds[1:])]


@dataclass
class TaskGraph:
    name: str
    params: dict
    seed: int
    tasks: list[TaskNode]
    regions: list[DataRegion]
    root: int = 0

    def __len__(self):
        return len(self.tasks)

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha1(dump_graph(self).encode()).hexdigest()
        return f"{self.name}:{h[:12]}"

    def work(self) -> float:
        """Total compute cost, body plus post-sync, ignoring memory."""
        return sum(t.compute_cost + t.post_cost for t in self.tasks)

    def validate(self) -> None:
        n = len(self.tasks)
        if not 0 <= self.root < n:
            raise GraphError("root id out of range")
        parents = [None] * n
        for t in self.tasks:
            if t.compute_cost < 0 or t.post_cost < 0:
                raise GraphError(f"task {t.id} has negative cost")
            for s in t.sync_points:
                if not 0 < s < len(t.children):
                    raise GraphError(f"task {t.id} sync point {s} out of range")
            for c in t.children:
                if not 0 <= c < n or parents[c] is not None or c == self.root:
                    raise GraphError(f"task {c} has more than one parent or is invalid")
                parents[c] = t.id
            for a in (*t.accesses, *t.post_accesses):
                if not 0 <= a.region < len(self.regions):
                    raise GraphError(f"task {t.id} references unknown region {a.region}")
                if not 0 <= a.start < a.stop <= self.regions[a.region].size_pages:
                    raise GraphError(f"task {t.id} page range {a.start}:{a.stop} outside region {a.region}")
        for t in self.tasks:
            if t.id != self.root and (parents[t.id] is None or parents[t.id] != t.parent):
                raise GraphError(f"task {t.id} is unreachable or has an inconsistent parent")
        used = {a.region for t in self.tasks for a in (*t.accesses, *t.post_accesses)}
        for r in self.regions:
            if r.size_pages < 1:
                raise GraphError(f"region {r.id} is empty")
            if r.id not in used:
                raise GraphError(f"region {r.id} ({r.name}) is never referenced")


@dataclass(frozen=True)
class GraphStats:
    tasks: int
    edges: int
    regions: int
    total_pages: int
    depth: int
    page_accesses: int

    @property
    def pages_per_task(self) -> float:
        return self.page_accesses / self.tasks


def graph_stats(g: TaskGraph) -> GraphStats:
    depth = [0] * len(g.tasks)
    depth[g.root] = 1
    stack = [g.root]
    while stack:
        t = g.tasks[stack.pop()]
        for c in t.children:
            depth[c] = depth[t.id] + 1
            stack.append(c)
    accesses = sum(a.pages for t in g.tasks for a in (*t.accesses, *t.post_accesses))
    return GraphStats(
        tasks=len(g.tasks),
        edges=sum(len(t.children) for t in g.tasks),
        regions=len(g.regions),
        total_pages=sum(r.size_pages for r in g.regions),
        depth=max(depth),
        page_accesses=accesses,
    )


def critical_path(g: TaskGraph, access_cost: float = 0.0) -> float:
    """Longest dependency chain, charging every page access at ``access_cost``."""
    memo: dict[int, float] = {}

    def own(costs, accesses):
        return costs + access_cost * sum(a.pages for a in accesses)

    # children have larger ids than their parent, so a reverse sweep is bottom-up
    for t in reversed(g.tasks):
        span = own(t.compute_cost, t.accesses)
        if not t.children:
            memo[t.id] = span
            continue
        if t.sync_after_children:
            for group in t.groups():
                span += max(memo[c] for c in group)
            span += own(t.post_cost, t.post_accesses)
        else:
            tail = [memo[c] for c in t.groups()[-1]]
            head = sum(max(memo[c] for c in grp) for grp in t.groups()[:-1])
            span += head + max(tail)
        memo[t.id] = span
    return memo[g.root]


def dump_graph(g: TaskGraph) -> str:
    """Line-oriented text dump, stable across runs."""
    lines = [f"graph {g.name} seed {g.seed} " + " ".join(f"{k}={g.params[k]}" for k in sorted(g.params))]
    for r in g.regions:
        lines.append(f"region {r.id} {r.name} pages {r.size_pages} master {int(r.initialized_by_master)}")

    def fmt(accs):
        return ",".join(f"{a.region}:{a.start}-{a.stop}{'w' if a.write else 'r'}" for a in accs) or "-"

    for t in g.tasks:
        kids = ",".join(map(str, t.children)) or "-"
        syncs = ",".join(map(str, t.sync_points)) or "-"
        lines.append(
            f"task {t.id} parent {'-' if t.parent is None else t.parent} kind {t.kind or '-'} "
            f"cost {t.compute_cost:g} acc {fmt(t.accesses)} children {kids} syncs {syncs} "
            f"wait {int(t.sync_after_children)} post {t.post_cost:g} pacc {fmt(t.post_accesses)}"
        )
    return "\n".join(lines) + "\n"


# Costs live on a 1/1024 grid so sums of durations are exact in floating point.
COST_GRID = 1024


def quantize(x: float) -> float:
    return round(x * COST_GRID) / COST_GRID


class _Builder:
    def __init__(self, seed: int, jitter: float):
        self.tasks: list[TaskNode] = []
        self.regions: list[DataRegion] = []
        self.rng = random.Random(seed)
        self.jitter = jitter

    def region(self, name, pages, master) -> int:
        rid = len(self.regions)
        self.regions.append(DataRegion(rid, name, int(pages), master))
        return rid

    def cost(self, base: float) -> float:
        if self.jitter:
            base = base * (1.0 + self.jitter * self.rng.uniform(-1.0, 1.0))
        return quantize(base)

    def task(self, parent, cost, accesses=(), kind="", **kw) -> int:
        tid = len(self.tasks)
        self.tasks.append(TaskNode(tid, parent, [], self.cost(cost), tuple(accesses), kind=kind, **kw))
        if parent is not None:
            self.tasks[parent].children.append(tid)
        return tid

    def finish(self, name, params, seed) -> TaskGraph:
        g = TaskGraph(name, dict(params), seed, self.tasks, self.regions)
        g.validate()
        return g


def _span(lo: int, n: int, per_page: int) -> tuple[int, int]:
    """Pages covering items [lo, lo+n) at ``per_page`` items per page."""
    return lo // per_page, -(-(lo + n) // per_page)


# -- generators -------------------------------------------------------------


def gen_fib(n: int = 20, cost: float = 4.0, seed: int = 0, jitter: float = 0.0) -> TaskGraph:
    """Binary call tree of fib(n); calls with n < 2 are leaves. No data."""
    if n < 0 or cost < 0:
        raise GraphError("fib needs n >= 0 and cost >= 0")
    b = _Builder(seed, jitter)

    def rec(parent, k):
        tid = b.task(parent, cost, kind="fib")
        if k >= 2:
            rec(tid, k - 1)
            rec(tid, k - 2)
        return tid

    rec(None, n)
    return b.finish("fib", {"n": n, "cost": cost, "jitter": jitter}, seed)


def gen_nqueens(n: int = 9, cost: float = 1.0, seed: int = 0, jitter: float = 0.0) -> TaskGraph:
    """One task per safe partial placement; full boards write one solution page."""
    if n < 1:
        raise GraphError("nqueens needs n >= 1")
    b = _Builder(seed, jitter)
    sol = b.region("solutions", 1, True)

    def rec(parent, cols):
        row = len(cols)
        acc = (Access(sol, 0, 1, True),) if row == n else ()
        tid = b.task(parent, cost * (row + 1), acc, kind="queen")
        if row < n:
            for c in range(n):
                if all(c != q and abs(c - q) != row - r for r, q in enumerate(cols)):
                    rec(tid, cols + (c,))
        return tid

    rec(None, ())
    if not any(t.accesses for t in b.tasks):
        b.regions.clear()  # no solutions for this n (2 and 3)
    return b.finish("nqueens", {"n": n, "cost": cost, "jitter": jitter}, seed)


def gen_sort(
    pages: int = 4096,
    leaf_pages: int = 4,
    merge_chunk: int = 64,
    sort_cost: float = 8.0,
    merge_cost: float = 1.0,
    seed: int = 0,
    jitter: float = 0.0,
) -> TaskGraph:
    """Four-way mergesort: sort quarters | merge pairs into tmp | merge tmp back.

    Merges are split into independent tasks of at most ``merge_chunk`` pages.
    """
    if pages < 1 or leaf_pages < 1 or merge_chunk < 1:
        raise GraphError("sort needs positive sizes")
    b = _Builder(seed, jitter)
    arr = b.region("array", pages, True)
    tmp = b.region("tmp", pages, False) if pages > leaf_pages and pages >= 4 else None

    def merges(parent, lo, hi, src, dst):
        for a in range(lo, hi, merge_chunk):
            z = min(a + merge_chunk, hi)
            b.task(parent, merge_cost * (z - a), [Access(src, a, z), Access(dst, a, z, True)], kind="merge")

    def rec(parent, lo, size):
        if size <= leaf_pages or size < 4:
            return b.task(parent, sort_cost * size, [Access(arr, lo, lo + size, True)], kind="sort_leaf")
        q, r = divmod(size, 4)
        parts = [q + (1 if i < r else 0) for i in range(4)]
        starts = [lo + sum(parts[:i]) for i in range(4)]
        tid = b.task(parent, 0.0, kind="sort")
        for s, p in zip(starts, parts):
            rec(tid, s, p)
        first = len(b.tasks[tid].children)
        merges(tid, starts[0], starts[2], arr, tmp)
        merges(tid, starts[2], lo + size, arr, tmp)
        second = len(b.tasks[tid].children)
        merges(tid, lo, lo + size, tmp, arr)
        b.tasks[tid].sync_points = (first, second)
        return tid

    rec(None, 0, pages)
    return b.finish(
        "sort",
        {"pages": pages, "leaf_pages": leaf_pages, "merge_chunk": merge_chunk, "sort_cost": sort_cost,
         "merge_cost": merge_cost, "jitter": jitter},
        seed,
    )


def gen_fft(
    points: int = 1 << 17,
    leaf: int = 1 << 7,
    points_per_page: int = 64,
    point_cost: float = 0.01,
    twiddle_chunk: int | None = None,
    seed: int = 0,
    jitter: float = 0.0,
) -> TaskGraph:
    """Radix-2 recursive FFT: two half transforms | twiddle passes.

    Leaves read ``in`` and write ``out``; each twiddle task updates
    ``twiddle_chunk`` butterfly pairs of ``out`` (default: ``leaf``) and reads
    its stage's slice of the twiddle table. ``in`` and the table are set up by the master.
    """
    if twiddle_chunk is None:
        twiddle_chunk = leaf
    if points < 1 or leaf < 1 or points_per_page < 1 or twiddle_chunk < 1:
        raise GraphError("fft needs positive sizes")
    if points & (points - 1) or leaf & (leaf - 1):
        raise GraphError("fft sizes must be powers of two")
    b = _Builder(seed, jitter)
    ppp = points_per_page
    src = b.region("in", -(-points // ppp), True)
    dst = b.region("out", -(-points // ppp), False)
    # per-stage twiddle factors stored back to back: stage m starts at points - m
    tw = b.region("twiddle", -(-points // ppp), True) if points > leaf else None

    def rec(parent, lo, m):
        if m <= leaf:
            cost = point_cost * m * max(math.log2(m), 1.0)
            return b.task(
                parent, cost,
                [Access(src, *_span(lo, m, ppp)), Access(dst, *_span(lo, m, ppp), True)],
                kind="fft_leaf",
            )
        tid = b.task(parent, point_cost, kind="fft", sync_points=(2,))
        half = m // 2
        rec(tid, lo, half)
        rec(tid, lo + half, half)
        for off in range(0, half, twiddle_chunk):
            cnt = min(twiddle_chunk, half - off)
            acc = [
                Access(dst, *_span(lo + off, cnt, ppp), True),
                Access(dst, *_span(lo + half + off, cnt, ppp), True),
                Access(tw, *_span(points - m + off, cnt, ppp)),
            ]
            b.task(tid, point_cost * 2 * cnt, acc, kind="twiddle")
        return tid

    rec(None, 0, points)
    return b.finish(
        "fft",
        {"points": points, "leaf": leaf, "points_per_page": ppp, "point_cost": point_cost,
         "twiddle_chunk": twiddle_chunk, "jitter": jitter},
        seed,
    )


# Strassen products, by the first quadrant each one reads from A and from B
# (quadrants in Morton order: 0=11, 1=12, 2=21, 3=22).
_STRASSEN_QUADS = ((0, 0), (2, 0), (0, 1), (3, 2), (0, 3), (2, 0), (1, 2))
# Products summed into each output quadrant: C11 = M1+M4-M5+M7, C12 = M3+M5,
# C21 = M2+M4, C22 = M1-M2+M3+M6.
_STRASSEN_SUMS = ((0, 3, 4, 6), (2, 4), (1, 3), (0, 1, 2, 5))


def gen_strassen(
    n: int = 512,
    leaf: int = 32,
    elems_per_page: int = 512,
    combine_split: int = 4,
    flop_cost: float = 1 / 8192,
    add_cost: float = 1 / 256,
    seed: int = 0,
    jitter: float = 0.0,
) -> TaskGraph:
    """Seven-way recursive multiply over Morton-ordered matrices.

    Leaves read one block of ``A`` and ``B`` (both master-initialized) and
    write their product into a private scratch slot. After a taskwait each
    internal task spawns combine tasks that add the products into its own
    slot (the root's into ``C``), ``combine_split`` tasks per quadrant.
    """
    if n < 1 or leaf < 1 or n & (n - 1) or leaf & (leaf - 1) or combine_split < 1:
        raise GraphError("strassen sizes must be positive powers of two")
    b = _Builder(seed, jitter)

    def pages_of(s):
        return max(1, s * s // elems_per_page)

    total = pages_of(n)
    a_reg = b.region("A", total, True)
    b_reg = b.region("B", total, True)
    c_reg = b.region("C", total, False)
    # scratch slots for every non-root task, one contiguous band per level
    levels = []
    s = n // 2
    while n > leaf and s >= leaf:
        levels.append(s)
        s //= 2
    level_base = [0]
    for i, sz in enumerate(levels):
        level_base.append(level_base[-1] + 7 ** (i + 1) * pages_of(sz))
    scratch = b.region("scratch", level_base[-1], False) if levels else None
    counters = [0] * len(levels)

    def rec(parent, depth, size, a_lo, b_lo):
        if depth == 0:
            out = (c_reg, 0, total)
        else:
            k = counters[depth - 1]
            counters[depth - 1] += 1
            lo = level_base[depth - 1] + k * pages_of(size)
            out = (scratch, lo, lo + pages_of(size))
        blk = pages_of(size)
        if size <= leaf:
            acc = [Access(a_reg, a_lo, a_lo + blk), Access(b_reg, b_lo, b_lo + blk), Access(*out, True)]
            return b.task(parent, flop_cost * size ** 3, acc, kind="mult"), out
        tid = b.task(parent, add_cost * size * size, kind="strassen")
        quarter = max(blk // 4, 1)
        prods = []
        for qa, qb in _STRASSEN_QUADS:
            _, o = rec(tid, depth + 1, size // 2, a_lo + (qa * blk) // 4, b_lo + (qb * blk) // 4)
            prods.append(o)
        b.tasks[tid].sync_points = (7,)
        slot = prods[0][2] - prods[0][1]
        pieces = min(combine_split, slot)
        for q, terms in enumerate(_STRASSEN_SUMS):
            q_lo = out[1] + min(q * quarter, blk - 1)
            q_len = min(quarter, out[2] - q_lo)
            for p in range(pieces):
                s_lo, s_hi = p * slot // pieces, (p + 1) * slot // pieces
                w_lo, w_hi = q_lo + p * q_len // pieces, q_lo + max((p + 1) * q_len // pieces, p * q_len // pieces + 1)
                acc = [Access(prods[m][0], prods[m][1] + s_lo, prods[m][1] + s_hi) for m in terms]
                acc.append(Access(out[0], w_lo, min(w_hi, out[2]), True))
                b.task(tid, add_cost * (size // 2) ** 2 * len(terms) / pieces, acc, kind="combine")
        return tid, out

    rec(None, 0, n, 0, 0)
    return b.finish(
        "strassen",
        {"n": n, "leaf": leaf, "elems_per_page": elems_per_page, "combine_split": combine_split,
         "flop_cost": flop_cost, "add_cost": add_cost, "jitter": jitter},
        seed,
    )


def gen_sparselu(
    blocks: int = 16,
    block_pages: int = 4,
    density: float = 1.0,
    block_cost: float = 20.0,
    seed: int = 0,
    jitter: float = 0.0,
) -> TaskGraph:
    """Blocked LU: per step lu0 | fwd + bdiv | bmod, all spawned by the root."""
    if blocks < 1 or block_pages < 1 or not 0.0 < density <= 1.0:
        raise GraphError("sparselu needs blocks >= 1, block_pages >= 1, 0 < density <= 1")
    b = _Builder(seed, jitter)
    pat = random.Random(seed)
    present = [[i == j or pat.random() < density for j in range(blocks)] for i in range(blocks)]
    mat = b.region("matrix", blocks * blocks * block_pages, True)

    def blk(i, j, write=False):
        lo = (i * blocks + j) * block_pages
        return Access(mat, lo, lo + block_pages, write)

    root = b.task(None, 0.0, kind="sparselu")
    syncs = []
    for k in range(blocks):
        groups = [[("lu0", [blk(k, k, True)])], [], []]
        for j in range(k + 1, blocks):
            if present[k][j]:
                groups[1].append(("fwd", [blk(k, k), blk(k, j, True)]))
        for i in range(k + 1, blocks):
            if present[i][k]:
                groups[1].append(("bdiv", [blk(k, k), blk(i, k, True)]))
        for i in range(k + 1, blocks):
            if not present[i][k]:
                continue
            for j in range(k + 1, blocks):
                if present[k][j]:
                    present[i][j] = True
                    groups[2].append(("bmod", [blk(i, k), blk(k, j), blk(i, j, True)]))
        for group in groups:
            if not group:
                continue
            if b.tasks[root].children:
                syncs.append(len(b.tasks[root].children))
            for kind, acc in group:
                b.task(root, block_cost, acc, kind=kind)
    b.tasks[root].sync_points = tuple(syncs)
    return b.finish(
        "sparselu",
        {"blocks": blocks, "block_pages": block_pages, "density": density, "block_cost": block_cost,
         "jitter": jitter},
        seed,
    )


_GENERATORS = {
    "fib": gen_fib,
    "nqueens": gen_nqueens,
    "sort": gen_sort,
    "fft": gen_fft,
    "strassen": gen_strassen,
    "sparselu": gen_sparselu,
}


def gen_graph(name: str, seed: int = 0, **scale) -> TaskGraph:
    """Build a benchmark graph; ``scale`` overrides the generator's desk defaults."""
    try:
        fn = _GENERATORS[name]
    except KeyError:
        raise GraphError(f"unknown benchmark {name!r}; expected one of {', '.join(BENCHMARKS)}") from None
    for k, v in scale.items():
        if isinstance(v, (int, float)) and not isinstance(v, bool) and v <= 0 and k != "jitter":
            raise GraphError(f"scale parameter {k} must be positive, got {v}")
    try:
        return fn(seed=seed, **scale)
    except TypeError as exc:
        raise GraphError(f"bad scale parameters for {name}: {exc}") from None
