"""Core priorities and thread-to-core placement.

Every core gets a first-level value ``v1 = sum_h w[h] * N_h`` where ``N_h`` is
the number of other cores ``h`` hops away, then one refinement pass
``v2 = sum_h w[h] * sum(v1 of the cores h hops away)``. The final priority is
``v1 + v2``. The master thread binds to a highest-priority core and workers
fill the cores closest to it.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .topology import Topology, cores_at_hops

# Python ints are unbounded; this only guards against absurd weight configs
# that would make priority tables impractically large to print or compare.
MAX_WEIGHT = 1 << 62


class PriorityError(ValueError):
    pass


@dataclass(frozen=True)
class WeightVector:
    """Per-hop weights; ``alpha[h]`` applies to cores ``h`` hops away."""

    alpha: tuple[int, ...]

    def __post_init__(self):
        if not self.alpha:
            raise PriorityError("weight vector is empty")
        for h, a in enumerate(self.alpha):
            if int(a) != a or a <= 0:
                raise PriorityError(f"weight for {h} hops must be a positive integer, got {a}")
            if a > MAX_WEIGHT:
                raise PriorityError(f"weight for {h} hops exceeds {MAX_WEIGHT}")
        for h in range(len(self.alpha) - 1):
            if self.alpha[h] <= self.alpha[h + 1]:
                raise PriorityError(
                    f"weights must strictly decrease: w[{h}]={self.alpha[h]} <= w[{h + 1}]={self.alpha[h + 1]}"
                )
        object.__setattr__(self, "alpha", tuple(int(a) for a in self.alpha))

    def __getitem__(self, hops: int) -> int:
        return self.alpha[hops] if hops < len(self.alpha) else 0

    def covers(self, t: Topology) -> bool:
        return len(self.alpha) > t.max_numa_distance

    def scaled(self, c: int) -> "WeightVector":
        return WeightVector(tuple(a * c for a in self.alpha))

    @classmethod
    def default_for(cls, t: Topology) -> "WeightVector":
        d = t.max_numa_distance
        return cls(tuple(2 ** (d - h) for h in range(d + 1)))


@dataclass(frozen=True)
class PriorityTable:
    v1: tuple[int, ...]
    v2: tuple[int, ...]
    tier_counts: tuple[dict, ...]

    @property
    def final(self) -> tuple[int, ...]:
        return tuple(a + b for a, b in zip(self.v1, self.v2))

    def rows(self):
        for core, (a, b) in enumerate(zip(self.v1, self.v2)):
            yield core, a, b, a + b


@dataclass(frozen=True)
class PlacementPlan:
    """Thread ``i`` runs on ``cores[i]``; thread 0 is the master."""

    master_core: int
    worker_order: tuple[int, ...]
    rng_seed: int | None = None
    mode: str = "numa_aware"

    @property
    def cores(self) -> tuple[int, ...]:
        return (self.master_core,) + self.worker_order

    @property
    def team_size(self) -> int:
        return 1 + len(self.worker_order)


def _check_weights(t: Topology, w: WeightVector) -> None:
    if not w.covers(t):
        raise PriorityError(
            f"no weight for {t.max_numa_distance} hops (weights cover 0..{len(w.alpha) - 1})"
        )


def compute_v1(t: Topology, w: WeightVector, core: int) -> int:
    _check_weights(t, w)
    return sum(w[h] * len(cs) for h, cs in cores_at_hops(t, core).items())


def compute_v2(t: Topology, w: WeightVector, v1_table, core: int) -> int:
    _check_weights(t, w)
    if len(v1_table) != t.core_count:
        raise PriorityError("v1 table does not cover every core")
    return sum(w[h] * sum(v1_table[j] for j in cs) for h, cs in cores_at_hops(t, core).items())


def compute_priorities(t: Topology, w: WeightVector | None = None) -> PriorityTable:
    """Two-level priority for every core; a single refinement pass, no iteration."""
    if w is None:
        w = WeightVector.default_for(t)
    _check_weights(t, w)
    tiers = [cores_at_hops(t, c) for c in t.cores()]
    v1 = [sum(w[h] * len(cs) for h, cs in tier.items()) for tier in tiers]
    v2 = [sum(w[h] * sum(v1[j] for j in cs) for h, cs in tier.items()) for tier in tiers]
    counts = tuple({h: len(cs) for h, cs in tier.items()} for tier in tiers)
    return PriorityTable(tuple(v1), tuple(v2), counts)


def build_placement(t: Topology, pt: PriorityTable, team_size: int, seed: int = 0) -> PlacementPlan:
    """Bind the master to a top-priority core and workers as close to it as possible.

    Ties among equally ranked cores are broken by a generator seeded with
    ``seed``, so the plan is reproducible.
    """
    if not 1 <= team_size <= t.core_count:
        raise PriorityError(f"team size {team_size} outside 1..{t.core_count}")
    rng = random.Random(seed)
    final = pt.final
    best = max(final)
    master = rng.choice([c for c in t.cores() if final[c] == best])

    jitter = list(t.cores())
    rng.shuffle(jitter)
    rank = {c: i for i, c in enumerate(jitter)}
    master_node = t.distance[t.node_of(master)]
    rest = sorted(
        (c for c in t.cores() if c != master),
        key=lambda c: (master_node[t.node_of(c)], -final[c], rank[c]),
    )
    return PlacementPlan(master, tuple(rest[: team_size - 1]), seed, "numa_aware")


def naive_placement(t: Topology, team_size: int) -> PlacementPlan:
    """OS-default binding: master on core 0, workers on ascending core ids."""
    if not 1 <= team_size <= t.core_count:
        raise PriorityError(f"team size {team_size} outside 1..{t.core_count}")
    return PlacementPlan(0, tuple(range(1, team_size)), None, "naive_first_core")


def make_placement(t: Topology, mode: str, team_size: int, weights=None, seed: int = 0) -> PlacementPlan:
    if mode in ("numa", "numa_aware"):
        return build_placement(t, compute_priorities(t, weights), team_size, seed)
    if mode in ("naive", "naive_first_core"):
        return naive_placement(t, team_size)
    raise PriorityError(f"unknown placement mode {mode!r}")
