"""Experiment driver: sweep policies, placements and team sizes, emit CSV.

A config is an INI file::

    [experiment]
    topology = x4600_like.topo     # path (relative to this file) or builtin name
    benchmark = fft
    scale = {"points": 16384, "leaf": 64}
    graph_seed = 0
    jitter = 0.0
    seed = 0
    repetitions = 5
    mode = sim                     # or native
    output = results.csv

    [sweep]
    policies = bf, wf, dfwspt, dfwsrpt
    placements = numa_aware, naive_first_core
    threads = 1, 2, 4, 8, 16

    weights = [8, 4, 2, 1]         # optional per-hop priority weights

    [latency]                      # optional LatencyModel overrides
    numa_factor = 1.0, 1.5, 2.0, 2.2

Command-line flags override the file.
"""

from __future__ import annotations

import argparse
import ast
import configparser
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from . import __version__
from .executor import run_graph
from .policies import PolicyKind
from .priority import PriorityError, WeightVector, compute_priorities, make_placement
from .sim import LatencyModel, SimReport, simulate
from .taskgen import BENCHMARKS, GraphError, TaskGraph, gen_graph
from .topology import Topology, TopologyError, hops_between, read_topology

CSV_VERSION = 1
COLUMNS = (
    "policy", "placement", "threads", "makespan", "speedup", "remote_pages", "remote_latency",
    "steals_h0", "steals_h1", "steals_h2", "steals_h3", "seed",
)
PLACEMENTS = {"numa": "numa_aware", "numa_aware": "numa_aware", "naive": "naive_first_core",
              "naive_first_core": "naive_first_core"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    topology: str = "x4600_like"
    benchmark: str = "fft"
    scale: dict = field(default_factory=dict)
    graph_seed: int = 0
    jitter: float = 0.0
    policies: tuple[str, ...] = ("bf", "wf", "dfwspt", "dfwsrpt")
    placements: tuple[str, ...] = ("numa_aware", "naive_first_core")
    threads: tuple[int, ...] = (1, 2, 4, 8, 16)
    weights: tuple[int, ...] | None = None
    latency: LatencyModel = field(default_factory=LatencyModel)
    seed: int = 0
    repetitions: int = 5
    mode: str = "sim"
    pin: bool = False
    output: str | None = None
    jobs: int = 1
    base_dir: Path = field(default_factory=Path.cwd)

    def validate(self) -> None:
        if self.benchmark not in BENCHMARKS:
            raise ConfigError(f"unknown benchmark {self.benchmark!r}")
        if not self.policies or not self.placements or not self.threads:
            raise ConfigError("sweep is empty: policies, placements and threads all need values")
        for p in self.policies:
            PolicyKind.parse(p)
        for p in self.placements:
            if p not in PLACEMENTS:
                raise ConfigError(f"unknown placement {p!r}; expected numa or naive")
        if any(n < 1 for n in self.threads):
            raise ConfigError("team sizes must be >= 1")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.mode not in ("sim", "native"):
            raise ConfigError(f"mode must be sim or native, got {self.mode!r}")

    def cells(self):
        for pol in self.policies:
            for pl in self.placements:
                for n in self.threads:
                    yield PolicyKind.parse(pol).value, PLACEMENTS[pl], n

    def load_topology(self) -> Topology:
        path = Path(self.topology)
        if not path.is_absolute() and (self.base_dir / path).exists():
            path = self.base_dir / path
        return read_topology(path)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _weights(text: str) -> tuple[int, ...]:
    return _ints(text.strip().strip("[]"))


def _names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.replace(",", " ").split() if x.strip())


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Line number of every ``key = value`` (and section header) in an INI text."""
    where, section = {}, None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("["):
            section = line.strip("[]").strip()
            where[(section, "")] = n
        elif "=" in line and not line.startswith(("#", ";")) and section is not None:
            where[(section, line.split("=", 1)[0].strip().lower())] = n
    return where


def load_config(path) -> ExperimentConfig:
    """Parse an experiment INI file; errors name the file, line and offending key."""
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        text = path.read_text()
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    lines = _key_lines(text)

    def at(section, key=""):
        n = lines.get((section, key))
        return f"{path}:{n}" if n else str(path)

    cfg = ExperimentConfig(base_dir=path.parent)
    known = {
        "experiment": {"topology", "benchmark", "scale", "graph_seed", "jitter", "seed", "repetitions",
                       "mode", "pin", "output", "jobs", "weights"},
        "sweep": {"policies", "placements", "threads"},
        "weights": {"alpha"},
        "latency": {f.name for f in fields(LatencyModel)},
    }
    for section in cp.sections():
        if section not in known:
            raise ConfigError(f"{at(section)}: unknown section [{section}]")
        for key in cp[section]:
            if key not in known[section]:
                raise ConfigError(f"{at(section, key)}: unknown key {key!r} in [{section}]")

    def get(section, key, conv):
        if not cp.has_option(section, key):
            return None
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, SyntaxError, TypeError) as exc:
            raise ConfigError(f"{at(section, key)}: [{section}] {key} = {raw!r}: {exc}") from None

    def scale(raw):
        val = ast.literal_eval(raw)
        if not isinstance(val, dict):
            raise ValueError("scale must be a dict literal")
        return val

    updates = {
        "topology": get("experiment", "topology", str),
        "benchmark": get("experiment", "benchmark", str),
        "scale": get("experiment", "scale", scale),
        "graph_seed": get("experiment", "graph_seed", int),
        "jitter": get("experiment", "jitter", float),
        "seed": get("experiment", "seed", int),
        "repetitions": get("experiment", "repetitions", int),
        "mode": get("experiment", "mode", str),
        "pin": get("experiment", "pin", lambda s: cp.BOOLEAN_STATES[s.lower()]),
        "output": get("experiment", "output", str),
        "jobs": get("experiment", "jobs", int),
        "policies": get("sweep", "policies", _names),
        "placements": get("sweep", "placements", _names),
        "threads": get("sweep", "threads", _ints),
        "weights": get("weights", "alpha", _ints) or get("experiment", "weights", _weights),
    }
    cfg = replace(cfg, **{k: v for k, v in updates.items() if v is not None})
    if cp.has_section("latency"):
        lat = {}
        for key in cp["latency"]:
            conv = (lambda s: tuple(float(x) for x in s.replace(",", " ").split())) if key == "numa_factor" else float
            lat[key] = get("latency", key, conv)
        try:
            cfg.latency = LatencyModel(**lat)
        except ValueError as exc:
            raise ConfigError(f"{at('latency')}: [latency] {exc}") from None
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return cfg


@dataclass(frozen=True)
class CellResult:
    policy: str
    placement: str
    threads: int
    seed: int
    makespan: float
    remote_pages: int | None
    remote_latency: float | None
    steals_by_hop: tuple[int, ...]
    report: SimReport | None = None


@dataclass
class ResultSet:
    benchmark: str
    graph: str
    topology: str
    mode: str
    rows: list[CellResult] = field(default_factory=list)
    errors: list[tuple[tuple, str]] = field(default_factory=list)

    def best(self, policy: str, placement: str, threads: int) -> CellResult:
        for r in self.rows:
            if (r.policy, r.placement, r.threads) == (policy, placement, threads):
                return r
        raise KeyError((policy, placement, threads))

    def serial_makespan(self) -> float | None:
        serial = [r.makespan for r in self.rows if r.threads == 1]
        return min(serial) if serial else None


def _native_steals(trace, plan, t: Topology) -> tuple[int, ...]:
    out = [0, 0, 0, 0]
    for e in trace.steals():
        h = hops_between(t, plan.cores[e.thread], plan.cores[e.stolen_from])
        out[min(h, 3)] += 1
    return tuple(out)


def _run_cell(cfg: ExperimentConfig, t: Topology, g: TaskGraph, cell) -> CellResult:
    policy, placement, threads = cell
    weights = WeightVector(cfg.weights) if cfg.weights else None
    best = None
    for r in range(cfg.repetitions):
        seed = cfg.seed + r
        plan = make_placement(t, placement, threads, weights, seed)
        if cfg.mode == "native":
            tr = run_graph(g, plan, policy, pin=cfg.pin, seed=seed, topology=t)
            res = CellResult(policy, placement, threads, seed, tr.wall_time, None, None, _native_steals(tr, plan, t))
        else:
            rep = simulate(g, t, plan, policy, cfg.latency, seed=seed, record_trace=False)
            res = CellResult(policy, placement, threads, seed, rep.makespan, rep.remote_pages,
                             rep.remote_latency, tuple(rep.steals_by_hop()), rep)
        if best is None or res.makespan < best.makespan:
            best = res
    return best


def _cell_or_error(args):
    cfg, t, g, cell = args
    try:
        return _run_cell(cfg, t, g, cell), None
    except (ValueError, RuntimeError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def run_experiment(cfg: ExperimentConfig, log=None) -> ResultSet:
    """Run every cell of the sweep, best-of-``repetitions`` by makespan.

    A failing cell is recorded in ``errors`` and the sweep continues. With an
    ``output`` path the CSV is rewritten after each cell, so partial results
    survive an interrupted run.
    """
    cfg.validate()
    t = cfg.load_topology()
    if cfg.weights:
        compute_priorities(t, WeightVector(cfg.weights))
    g = gen_graph(cfg.benchmark, seed=cfg.graph_seed, jitter=cfg.jitter, **cfg.scale)
    rs = ResultSet(cfg.benchmark, g.fingerprint, Path(cfg.topology).stem, cfg.mode)
    cells = list(cfg.cells())
    jobs = [(cfg, t, g, c) for c in cells]
    if cfg.jobs > 1 and cfg.mode == "sim":
        with ProcessPoolExecutor(cfg.jobs) as pool:
            outcomes = pool.map(_cell_or_error, jobs)
            _collect(rs, cells, outcomes, cfg, log)
    else:
        _collect(rs, cells, map(_cell_or_error, jobs), cfg, log)
    return rs


def _collect(rs, cells, outcomes, cfg, log):
    for cell, (res, err) in zip(cells, outcomes):
        if err is None:
            rs.rows.append(res)
        else:
            rs.errors.append((cell, err))
            if log:
                print(f"error in cell policy={cell[0]} placement={cell[1]} threads={cell[2]}: {err}", file=log)
        if cfg.output:
            Path(cfg.output).write_text(emit_summary(rs, "csv"))


def _fmt(x, digits=4) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.{digits}f}"
    return str(x)


def _records(rs: ResultSet) -> list[list[str]]:
    serial = rs.serial_makespan()
    out = []
    for r in rs.rows:
        speed = serial / r.makespan if serial is not None and r.makespan else None
        hops = list(r.steals_by_hop) + [0] * (4 - len(r.steals_by_hop))
        out.append([
            r.policy, r.placement, str(r.threads), _fmt(r.makespan, 6 if rs.mode == "native" else 4),
            _fmt(speed), _fmt(r.remote_pages), _fmt(r.remote_latency), *map(str, hops[:4]), str(r.seed),
        ])
    return out


def emit_summary(rs: ResultSet, fmt: str = "csv") -> str:
    """Render results; speedups are relative to the best single-thread cell."""
    lines = []
    comment = (f"# numasched results v{CSV_VERSION} benchmark={rs.benchmark} graph={rs.graph} "
               f"topology={rs.topology} mode={rs.mode}")
    lines.append(comment)
    if rs.serial_makespan() is None and rs.rows:
        lines.append("# no single-thread cell: speedup column left empty")
    records = _records(rs)
    if fmt == "csv":
        lines.append(",".join(COLUMNS))
        lines.extend(",".join(rec) for rec in records)
    elif fmt == "table":
        widths = [max(len(c), *(len(rec[i]) for rec in records)) if records else len(c)
                  for i, c in enumerate(COLUMNS)]
        lines.append("  ".join(c.rjust(w) for c, w in zip(COLUMNS, widths)))
        lines.append("  ".join("-" * w for w in widths))
        lines.extend("  ".join(v.rjust(w) for v, w in zip(rec, widths)) for rec in records)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> list[dict]:
    """Read rows written by ``emit_summary(..., "csv")`` back as dicts of strings."""
    rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    header = rows[0].split(",")
    return [dict(zip(header, ln.split(","))) for ln in rows[1:]]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="numasched",
        description="Simulate or natively run NUMA-aware task scheduling experiments.",
    )
    ap.add_argument("--config", help="experiment INI file")
    ap.add_argument("--topology", help="topology file or builtin name (uma4, twonode_4_2, x4600_like)")
    ap.add_argument("--benchmark", choices=BENCHMARKS)
    ap.add_argument("--scale", help='generator overrides as a dict literal, e.g. \'{"n": 18}\'')
    ap.add_argument("--scheduler", help="bf, wf, dfwspt or dfwsrpt (comma list allowed)")
    ap.add_argument("--placement", help="numa or naive (comma list allowed)")
    ap.add_argument("--threads", help="team size (comma list allowed)")
    ap.add_argument("--weights", help="per-hop priority weights, e.g. 8,4,2,1 (default: 2^(D-h))")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--reps", type=int, help="repetitions per cell; the fastest is kept")
    ap.add_argument("--native", action="store_true", help="run on OS threads instead of simulating")
    ap.add_argument("--pin", action="store_true", help="bind native workers to their plan cores")
    ap.add_argument("--jobs", type=int, help="simulate cells in this many processes")
    ap.add_argument("--out", help="write results here instead of stdout")
    ap.add_argument("--format", choices=("csv", "table"), default="csv")
    ap.add_argument("--priorities", action="store_true", help="print the core priority table and exit")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    over = {}
    if args.topology:
        over["topology"] = args.topology
        over["base_dir"] = Path.cwd()
    if args.benchmark:
        over["benchmark"] = args.benchmark
    if args.scale:
        try:
            over["scale"] = ast.literal_eval(args.scale)
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(f"--scale: {exc}") from None
        if not isinstance(over["scale"], dict):
            raise ConfigError("--scale must be a dict literal")
    if args.scheduler:
        over["policies"] = _names(args.scheduler)
    if args.placement:
        over["placements"] = _names(args.placement)
    if args.threads:
        try:
            over["threads"] = _ints(args.threads)
        except ValueError:
            raise ConfigError(f"--threads: not a list of integers: {args.threads!r}") from None
    if args.weights:
        try:
            over["weights"] = _weights(args.weights)
        except ValueError:
            raise ConfigError(f"--weights: not a list of integers: {args.weights!r}") from None
    if args.seed is not None:
        over["seed"] = args.seed
    if args.reps is not None:
        over["repetitions"] = args.reps
    if args.native:
        over["mode"] = "native"
    if args.pin:
        over["pin"] = True
    if args.jobs is not None:
        over["jobs"] = args.jobs
    if args.out:
        over["output"] = args.out
    cfg = replace(cfg, **over)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.priorities:
            t = cfg.load_topology()
            pt = compute_priorities(t, WeightVector(cfg.weights) if cfg.weights else None)
            print("core  node        v1        v2     final")
            for core, v1, v2, fin in pt.rows():
                print(f"{core:4d}  {t.node_of(core):4d}  {v1:8d}  {v2:8d}  {fin:8d}")
            return 0
        rs = run_experiment(cfg, log=sys.stderr)
    except (ConfigError, TopologyError, GraphError, PriorityError, ValueError, OSError) as exc:
        print(f"numasched: error: {exc}", file=sys.stderr)
        return 2
    text = emit_summary(rs, args.format)
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 1 if rs.errors else 0


if __name__ == "__main__":
    sys.exit(main())
