"""Machine model: NUMA nodes, the cores they own, and hop distances.

Topology file grammar (one statement per line, ``#`` starts a comment)::

    nodes <N>
    node <id> cores <c0,c1,...> [mem <pages>]     # exactly N lines
    dist <d0> <d1> ... <dN-1>                     # exactly N rows, node order

Node lines may appear in any order but must cover ids ``0..N-1``; core ids
must cover ``0..core_count-1`` exactly once. Distance rows are hop counts
(local = 0). Anything after the last ``dist`` row is rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

DEFAULT_MEMORY_PAGES = 1 << 20

BUILTIN_TOPOLOGIES = ("uma4", "twonode_4_2", "x4600_like")


class TopologyError(ValueError):
    """Raised for malformed or inconsistent topology descriptions."""

    def __init__(self, message: str, line: int | None = None, row: int | None = None, node: int | None = None):
        self.line = line
        # matrix row / node index the problem was found at, for mapping back to a file line
        self.row = row
        self.node = node
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class CoreRef:
    core_id: int
    node_id: int


@dataclass(frozen=True)
class NumaNode:
    id: int
    cores: tuple[int, ...]
    memory_capacity_pages: int = DEFAULT_MEMORY_PAGES


@dataclass(frozen=True)
class Topology:
    """Immutable NUMA machine description.

    ``distance[i][j]`` is the hop count between nodes ``i`` and ``j``.
    Construct through :func:`load_topology` or :meth:`from_nodes`, both of
    which validate.
    """

    nodes: tuple[NumaNode, ...]
    distance: tuple[tuple[int, ...], ...]
    _core_node: tuple[int, ...] = field(repr=False, compare=False)

    @classmethod
    def from_nodes(cls, cores_per_node, distance, memory_pages=None) -> "Topology":
        """Build a topology from per-node core lists and a hop matrix."""
        if memory_pages is None:
            memory_pages = [DEFAULT_MEMORY_PAGES] * len(cores_per_node)
        nodes = tuple(
            NumaNode(i, tuple(cores), int(mem))
            for i, (cores, mem) in enumerate(zip(cores_per_node, memory_pages))
        )
        dist = tuple(tuple(int(x) for x in row) for row in distance)
        _validate(nodes, dist)
        core_node = [0] * sum(len(n.cores) for n in nodes)
        for n in nodes:
            for c in n.cores:
                core_node[c] = n.id
        return cls(nodes, dist, tuple(core_node))

    @classmethod
    def from_counts(cls, counts, distance, memory_pages=None) -> "Topology":
        """Like ``from_nodes`` but with core ids numbered consecutively per node."""
        lists, nxt = [], 0
        for k in counts:
            lists.append(list(range(nxt, nxt + k)))
            nxt += k
        return cls.from_nodes(lists, distance, memory_pages)

    @classmethod
    def uniform(cls, n_nodes: int, cores_per_node: int, hops: int = 1) -> "Topology":
        """Fully connected machine with equal nodes at a constant distance."""
        cores = [
            list(range(i * cores_per_node, (i + 1) * cores_per_node))
            for i in range(n_nodes)
        ]
        dist = [[0 if i == j else hops for j in range(n_nodes)] for i in range(n_nodes)]
        return cls.from_nodes(cores, dist)

    @property
    def core_count(self) -> int:
        return len(self._core_node)

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @cached_property
    def max_numa_distance(self) -> int:
        return max(max(row) for row in self.distance)

    @property
    def min_numa_distance(self) -> int:
        return 0

    def node_of(self, core: int) -> int:
        if not 0 <= core < len(self._core_node):
            raise TopologyError(f"unknown core id {core}")
        return self._core_node[core]

    def core_ref(self, core: int) -> CoreRef:
        return CoreRef(core, self.node_of(core))

    def cores(self) -> range:
        return range(self.core_count)

    def nodes_by_distance(self, node: int) -> list[int]:
        """All node ids ordered by (hops from ``node``, node id)."""
        row = self.distance[node]
        return sorted(range(self.node_count), key=lambda j: (row[j], j))

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return self.nodes == other.nodes and self.distance == other.distance

    def __hash__(self):
        return hash((self.nodes, self.distance))


def _validate(nodes, dist) -> None:
    n = len(nodes)
    if n == 0:
        raise TopologyError("topology has no nodes")
    if len(dist) != n or any(len(row) != n for row in dist):
        raise TopologyError(f"distance matrix must be {n}x{n}")
    for i in range(n):
        if dist[i][i] != 0:
            raise TopologyError(f"distance[{i}][{i}] = {dist[i][i]}, expected 0", row=i)
        for j in range(n):
            if dist[i][j] != dist[j][i]:
                raise TopologyError(
                    f"asymmetric distance: [{i}][{j}]={dist[i][j]} vs [{j}][{i}]={dist[j][i]}", row=max(i, j)
                )
            if i != j and dist[i][j] < 1:
                raise TopologyError(f"distance[{i}][{j}] must be >= 1 between distinct nodes", row=i)
    seen: set[int] = set()
    for node in nodes:
        if not node.cores:
            raise TopologyError(f"node {node.id} has no cores", node=node.id)
        if node.memory_capacity_pages < 0:
            raise TopologyError(f"node {node.id} has negative memory capacity", node=node.id)
        for c in node.cores:
            if c in seen:
                raise TopologyError(f"duplicate core id {c}", node=node.id)
            seen.add(c)
    if seen != set(range(len(seen))):
        raise TopologyError(f"core ids must cover 0..{len(seen) - 1} without gaps")


def load_topology(text: str) -> Topology:
    """Parse and validate topology-file content."""
    n_nodes = None
    node_lines: dict[int, tuple[list[int], int]] = {}
    rows: list[list[int]] = []
    row_lines: list[int] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        key = tokens[0]
        if n_nodes is None:
            if key != "nodes" or len(tokens) != 2:
                raise TopologyError("expected header 'nodes <N>'", lineno)
            n_nodes = _int(tokens[1], lineno, "node count")
            if n_nodes < 1:
                raise TopologyError("node count must be >= 1", lineno)
            continue
        if rows and len(rows) == n_nodes:
            raise TopologyError(f"trailing content after distance matrix: {line!r}", lineno)
        if key == "node":
            if rows:
                raise TopologyError("node line after distance rows", lineno)
            node_id, cores, mem = _parse_node(tokens, lineno)
            if node_id in node_lines:
                raise TopologyError(f"duplicate node id {node_id}", lineno)
            if not 0 <= node_id < n_nodes:
                raise TopologyError(f"node id {node_id} outside 0..{n_nodes - 1}", lineno)
            node_lines[node_id] = (cores, mem, lineno)
        elif key == "dist":
            if len(node_lines) != n_nodes:
                raise TopologyError(
                    f"expected {n_nodes} node lines before distances, got {len(node_lines)}", lineno
                )
            row = [_int(tok, lineno, "distance") for tok in tokens[1:]]
            if len(row) != n_nodes:
                raise TopologyError(f"distance row has {len(row)} entries, expected {n_nodes}", lineno)
            if any(x < 0 for x in row):
                raise TopologyError("negative distance", lineno)
            rows.append(row)
            row_lines.append(lineno)
        else:
            raise TopologyError(f"unknown statement {key!r}", lineno)

    if n_nodes is None:
        raise TopologyError("empty topology file")
    if len(rows) != n_nodes:
        raise TopologyError(f"expected {n_nodes} distance rows, got {len(rows)}")
    try:
        return Topology.from_nodes(
            [node_lines[i][0] for i in range(n_nodes)],
            rows,
            [node_lines[i][1] for i in range(n_nodes)],
        )
    except TopologyError as exc:
        if exc.row is not None:
            line = row_lines[exc.row]
        elif exc.node is not None:
            line = node_lines[exc.node][2]
        else:
            line = row_lines[-1]
        raise TopologyError(str(exc), line) from None


def _int(token: str, lineno: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise TopologyError(f"malformed {what} {token!r}", lineno) from None


def _parse_node(tokens, lineno):
    if len(tokens) not in (4, 6) or tokens[2] != "cores":
        raise TopologyError("expected 'node <id> cores <c0,c1,...> [mem <pages>]'", lineno)
    node_id = _int(tokens[1], lineno, "node id")
    cores = [_int(c, lineno, "core id") for c in tokens[3].split(",")]
    mem = DEFAULT_MEMORY_PAGES
    if len(tokens) == 6:
        if tokens[4] != "mem":
            raise TopologyError(f"unexpected token {tokens[4]!r}", lineno)
        mem = _int(tokens[5], lineno, "memory capacity")
    return node_id, cores, mem


def serialize_topology(t: Topology) -> str:
    lines = [f"nodes {t.node_count}"]
    for node in t.nodes:
        cores = ",".join(str(c) for c in node.cores)
        lines.append(f"node {node.id} cores {cores} mem {node.memory_capacity_pages}")
    for row in t.distance:
        lines.append("dist " + " ".join(str(x) for x in row))
    return "\n".join(lines) + "\n"


def read_topology(path) -> Topology:
    """Load a topology from a path, or from a builtin name such as ``x4600_like``."""
    p = Path(path)
    if not p.exists() and str(path).removesuffix(".topo") in BUILTIN_TOPOLOGIES:
        return builtin_topology(str(path).removesuffix(".topo"))
    try:
        return load_topology(p.read_text())
    except TopologyError as exc:
        raise TopologyError(f"{p}: {exc}") from None


def builtin_topology(name: str) -> Topology:
    if name not in BUILTIN_TOPOLOGIES:
        raise TopologyError(f"unknown builtin topology {name!r}")
    text = resources.files("numasched.data").joinpath(f"{name}.topo").read_text()
    return load_topology(text)


def hops_from_slit(slit) -> list[list[int]]:
    """Convert an ACPI SLIT table (local = 10) to hop counts.

    hops = round((slit - 10) / 10), halves rounded up; off-diagonal entries
    are clamped to at least one hop.
    """
    n = len(slit)
    out = []
    for i, row in enumerate(slit):
        if len(row) != n:
            raise TopologyError("SLIT table must be square")
        hops = []
        for j, v in enumerate(row):
            h = int((v - 10) / 10 + 0.5) if v >= 10 else 0
            hops.append(0 if i == j else max(h, 1))
        out.append(hops)
    return out


def hops_between(t: Topology, core_a: int, core_b: int) -> int:
    return t.distance[t.node_of(core_a)][t.node_of(core_b)]


def cores_at_hops(t: Topology, core: int) -> dict[int, frozenset[int]]:
    """Partition every other core by its hop distance from ``core``."""
    row = t.distance[t.node_of(core)]
    tiers: dict[int, set[int]] = {}
    for other in t.cores():
        if other != core:
            tiers.setdefault(row[t.node_of(other)], set()).add(other)
    return {h: frozenset(tiers[h]) for h in sorted(tiers)}
