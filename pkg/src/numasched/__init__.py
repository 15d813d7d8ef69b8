"""NUMA-aware thread placement and locality-aware work stealing.

The package models a NUMA machine as hop distances between nodes, ranks
cores for thread placement, and compares work-stealing policies on
synthetic fork-join task graphs, either in a discrete-event simulator with
first-touch page placement or on a native thread pool.
"""

__version__ = "0.1.0"

from .compare import compare_runs
from .executor import WorkerDeque, run_graph
from .policies import PolicyKind, PriorityList, build_priority_lists, enqueue_side, victim_sequence
from .priority import (
    PlacementPlan,
    PriorityTable,
    WeightVector,
    build_placement,
    compute_priorities,
    compute_v1,
    compute_v2,
    make_placement,
    naive_placement,
)
from .sim import LatencyModel, PageTable, SimReport, first_touch, serial_cost, simulate
from .taskgen import TaskGraph, gen_graph, graph_stats
from .topology import Topology, cores_at_hops, hops_between, load_topology, read_topology, serialize_topology
from .trace import ExecutionTrace, trace_check

__all__ = [
    "ExecutionTrace", "LatencyModel", "PageTable", "PlacementPlan", "PolicyKind", "PriorityList",
    "PriorityTable", "SimReport", "TaskGraph", "Topology", "WeightVector", "WorkerDeque",
    "build_placement", "build_priority_lists", "compare_runs", "compute_priorities", "compute_v1",
    "compute_v2", "cores_at_hops", "enqueue_side", "first_touch", "gen_graph", "graph_stats",
    "hops_between", "load_topology", "make_placement", "naive_placement", "read_topology", "run_graph",
    "serial_cost", "serialize_topology", "simulate", "trace_check", "victim_sequence",
]
