"""Scheduling decisions shared by the simulator and the native executor.

Nothing here holds mutable state: a policy answers "where does a spawned
parent go" and "which victims does an idle thread probe, in what order".
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass

from .priority import PlacementPlan
from .topology import Topology, hops_between


class PolicyKind(enum.Enum):
    BREADTH_FIRST = "bf"
    WORK_FIRST = "wf"
    DFWSPT = "dfwspt"
    DFWSRPT = "dfwsrpt"

    @classmethod
    def parse(cls, name: str) -> "PolicyKind":
        key = name.strip().lower().replace("-", "_")
        aliases = {"breadth_first": "bf", "work_first": "wf"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown scheduler {name!r}; expected one of bf, wf, dfwspt, dfwsrpt") from None

    @property
    def child_first(self) -> bool:
        return self is not PolicyKind.BREADTH_FIRST

    def __str__(self):
        return self.value


class EnqueueSide(enum.Enum):
    FRONT = "front"
    BACK = "back"
    SHARED_QUEUE = "shared"


@dataclass(frozen=True)
class PriorityList:
    """Other threads ranked by (hops from this thread's core, thread id).

    ``tiers`` holds ``(hops, start, stop)`` slices of ``order`` that share a
    distance, nearest first.
    """

    thread: int
    order: tuple[int, ...]
    hops: tuple[int, ...]
    tiers: tuple[tuple[int, int, int], ...]

    def tier_members(self):
        for h, lo, hi in self.tiers:
            yield h, self.order[lo:hi]


def build_priority_lists(plan: PlacementPlan, t: Topology) -> list[PriorityList]:
    cores = plan.cores
    if len(set(cores)) != len(cores):
        raise ValueError("placement binds two threads to the same core")
    lists = []
    for me, core in enumerate(cores):
        ranked = sorted(
            ((hops_between(t, core, other_core), other) for other, other_core in enumerate(cores) if other != me)
        )
        order = tuple(tid for _, tid in ranked)
        hops = tuple(h for h, _ in ranked)
        tiers = []
        start = 0
        for i in range(1, len(hops) + 1):
            if i == len(hops) or hops[i] != hops[start]:
                tiers.append((hops[start], start, i))
                start = i
        lists.append(PriorityList(me, order, hops, tuple(tiers)))
    return lists


def enqueue_side(kind: PolicyKind) -> EnqueueSide:
    """Where a spawning thread queues work: child-first policies park the
    parent at the front of the owner's deque; breadth-first feeds one FIFO."""
    if kind is PolicyKind.BREADTH_FIRST:
        return EnqueueSide.SHARED_QUEUE
    return EnqueueSide.FRONT


def owner_pop_side(kind: PolicyKind) -> EnqueueSide:
    return EnqueueSide.SHARED_QUEUE if kind is PolicyKind.BREADTH_FIRST else EnqueueSide.FRONT


def steal_side(kind: PolicyKind) -> EnqueueSide | None:
    return None if kind is PolicyKind.BREADTH_FIRST else EnqueueSide.BACK


def victim_sequence(kind: PolicyKind, me: int, lists, rng: random.Random) -> tuple[int, ...]:
    """Ordered victims for one steal sweep by thread ``me``."""
    plist = lists[me]
    if kind is PolicyKind.BREADTH_FIRST:
        return ()
    if kind is PolicyKind.DFWSPT:
        return plist.order
    if kind is PolicyKind.DFWSRPT:
        seq = []
        for _, members in plist.tier_members():
            members = list(members)
            rng.shuffle(members)
            seq.extend(members)
        return tuple(seq)
    others = list(plist.order)
    rng.shuffle(others)
    return tuple(others)
