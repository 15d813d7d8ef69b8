import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import pytest

from numasched.cli import (
    COLUMNS,
    ConfigError,
    ExperimentConfig,
    emit_summary,
    load_config,
    main,
    parse_csv,
    run_experiment,
)
from numasched.priority import make_placement
from numasched.sim import simulate
from numasched.taskgen import gen_graph
from numasched.topology import builtin_topology

CONFIGS = Path(__file__).parent.parent / "configs"


def small(**kw):
    base = ExperimentConfig(topology="x4600_like", benchmark="fib", scale={"n": 10}, policies=("wf",),
                            placements=("numa",), threads=(4,), repetitions=1)
    return replace(base, **kw)


def test_one_cell_matches_simulation():
    rs = run_experiment(small())
    assert len(rs.rows) == 1
    t = builtin_topology("x4600_like")
    rep = simulate(gen_graph("fib", n=10), t, make_placement(t, "numa", 4, seed=0), "wf", seed=0)
    assert rs.rows[0].makespan == rep.makespan
    assert rs.rows[0].report.to_json() == rep.to_json()


def test_best_of_two():
    rs = run_experiment(small(repetitions=2, seed=5))
    t = builtin_topology("x4600_like")
    g = gen_graph("fib", n=10)
    runs = [simulate(g, t, make_placement(t, "numa", 4, seed=s), "wf", seed=s).makespan for s in (5, 6)]
    assert rs.rows[0].makespan == min(runs)
    assert rs.rows[0].seed == (5, 6)[runs.index(min(runs))]


def test_fib_speedup_sweep():
    rs = run_experiment(small(threads=(1, 2, 4), scale={"n": 14}, repetitions=2))
    rows = parse_csv(emit_summary(rs))
    speed = [float(r["speedup"]) for r in rows]
    assert speed[0] == 1.0
    assert speed == sorted(speed)


def test_csv_layout():
    rs = run_experiment(small(policies=("bf", "wf", "dfwspt", "dfwsrpt"), threads=(1, 2, 4, 8, 16)))
    text = emit_summary(rs, "csv")
    lines = text.splitlines()
    assert lines[0].startswith("# numasched results v1")
    assert lines[1] == ",".join(COLUMNS)
    body = lines[2:]
    assert len(body) == 20
    policies = [ln.split(",")[0] for ln in body]
    assert policies == sorted(policies, key=["bf", "wf", "dfwspt", "dfwsrpt"].index)


def test_single_row_output():
    lines = emit_summary(run_experiment(small(threads=(1,)))).splitlines()
    assert len([ln for ln in lines if not ln.startswith("#")]) == 2


def test_table_has_csv_numbers():
    rs = run_experiment(small(threads=(1, 4)))
    csv_rows = parse_csv(emit_summary(rs, "csv"))
    table = [ln.split() for ln in emit_summary(rs, "table").splitlines()[3:]]
    assert [dict(zip(COLUMNS, r)) for r in table] == [{k: v for k, v in r.items() if v} for r in csv_rows]
    widths = {len(ln) for ln in emit_summary(rs, "table").splitlines()[1:]}
    assert len(widths) == 1


def test_missing_serial_cell():
    text = emit_summary(run_experiment(small(threads=(2, 4))))
    assert "no single-thread cell" in text
    assert all(r["speedup"] == "" for r in parse_csv(text))


def test_failed_cells_logged_once(tmp_path, capsys):
    out = tmp_path / "r.csv"
    cfg = small(topology="uma4", threads=(2, 8), output=str(out))
    import io

    log = io.StringIO()
    rs = run_experiment(cfg, log=log)
    assert [r.threads for r in rs.rows] == [2]
    assert len(rs.errors) == 1 and log.getvalue().count("threads=8") == 1
    assert "threads=8" not in out.read_text()
    assert len(parse_csv(out.read_text())) == 1


def test_load_config_files():
    cfg = load_config(CONFIGS / "fft_x4600.ini")
    assert cfg.benchmark == "fft" and cfg.threads == (1, 2, 4, 8, 16)
    assert cfg.load_topology() == builtin_topology("x4600_like")
    fib = load_config(CONFIGS / "fib_twonode.ini")
    assert fib.latency.numa_factor == (1.0, 1.5)
    assert fib.placements == ("numa",)


@pytest.mark.parametrize(
    "body, fragment",
    [
        ("[experiment]\nbenchmark = nope\n", "unknown benchmark"),
        ("[experiment]\nrepetitions = 0\n", "repetitions"),
        ("[experiment]\nrepetitions = many\n", ":2: [experiment] repetitions"),
        ("[sweep]\nthreads =\n", "empty"),
        ("[sweep]\nplacements = random\n", "placement"),
        ("[bogus]\nx = 1\n", "unknown section"),
        ("[experiment]\nseed = 1\ncolour = red\n", ":3: unknown key"),
        ("[latency]\nnuma_factor = 1.0, 0.5\n", "non-decreasing"),
        ("[experiment]\nscale = [1, 2]\n", "dict"),
        ("no section header\n", "line: 1"),
    ],
)
def test_config_errors(tmp_path, body, fragment):
    p = tmp_path / "bad.ini"
    p.write_text(body)
    with pytest.raises(ConfigError) as exc:
        load_config(p)
    assert str(p) in str(exc.value) and fragment in str(exc.value)


def test_weights_key(tmp_path):
    p = tmp_path / "w.ini"
    p.write_text("[experiment]\ntopology = twonode_4_2\nweights = [2, 1]\n")
    assert load_config(p).weights == (2, 1)


def test_main_exit_codes(tmp_path, capsys):
    assert main(["--benchmark", "fib", "--scale", "{'n': 8}", "--threads", "1,2", "--reps", "1",
                 "--scheduler", "wf", "--placement", "numa", "--format", "table"]) == 0
    assert "makespan" in capsys.readouterr().out
    assert main(["--topology", str(tmp_path / "missing.topo")]) == 2
    assert main(["--scheduler", "cilk"]) == 2
    assert main(["--topology", "uma4", "--threads", "8", "--benchmark", "fib", "--scale", "{'n': 5}",
                 "--scheduler", "wf", "--placement", "naive", "--reps", "1"]) == 1
    assert main(["--topology", "twonode_4_2", "--weights", "2,1", "--priorities"]) == 0
    assert "68" in capsys.readouterr().out


def test_native_mode(tmp_path):
    out = tmp_path / "n.csv"
    rc = main(["--native", "--benchmark", "fib", "--scale", "{'n': 10}", "--threads", "1,4",
               "--scheduler", "dfwspt", "--placement", "numa", "--reps", "1", "--out", str(out)])
    assert rc == 0
    rows = parse_csv(out.read_text())
    assert len(rows) == 2 and rows[0]["remote_pages"] == ""
    assert "mode=native" in out.read_text()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "numasched", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "numasched" in res.stdout
