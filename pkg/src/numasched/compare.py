"""Side-by-side comparison of simulation reports for one graph."""

from __future__ import annotations

from dataclasses import dataclass

from .sim import SimReport


class ComparisonError(ValueError):
    pass


@dataclass(frozen=True)
class ComparisonRow:
    policy: str
    placement: str
    threads: int
    makespan: float
    speedup: float
    remote_fraction: float
    steals_by_hop: tuple[int, ...]


def compare_runs(reports: list[SimReport], serial_makespan: float | None = None) -> list[ComparisonRow]:
    """One row per (policy, placement, threads), keeping the fastest report.

    Speedup is measured against ``serial_makespan`` or, when omitted, the best
    single-thread report in ``reports``.
    """
    if not reports:
        raise ComparisonError("no reports to compare")
    graphs = {r.graph for r in reports}
    if len(graphs) > 1:
        raise ComparisonError(f"reports come from different graphs: {sorted(graphs)}")
    if serial_makespan is None:
        serial = [r.makespan for r in reports if r.threads == 1]
        if not serial:
            raise ComparisonError("no single-thread report to use as the serial baseline")
        serial_makespan = min(serial)

    best: dict[tuple, SimReport] = {}
    for r in reports:
        key = (r.policy, r.placement, r.threads)
        if key not in best or r.makespan < best[key].makespan:
            best[key] = r
    return [
        ComparisonRow(
            r.policy, r.placement, r.threads, r.makespan,
            serial_makespan / r.makespan if r.makespan else 1.0,
            r.remote_fraction, tuple(r.steals_by_hop()),
        )
        for r in best.values()
    ]
