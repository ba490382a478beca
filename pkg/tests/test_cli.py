from __future__ import annotations

import csv
import json
import math
import re
import subprocess
import sys

import pytest

from convpart.cli import main, read_results
from convpart.geometry import Cube, load_partition

FAST = ["--gl-points", "4", "--samples", "1024"]


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_const_rates_are_na(tmp_path, capsys):
    res = tmp_path / "r.csv"
    code, out, _ = _run(["run", "--function", "const", "--d", "2", "--p", "2", "--q", "2", "--budgets", "1,4,16", "--out", str(res)] + FAST, capsys)
    assert code == 0
    rows = read_results(res)
    assert all(r.error == 0.0 for r in rows)
    rates = list(csv.DictReader(open(tmp_path / "r_rates.csv")))
    assert {r["slope"] for r in rates} == {"NA"}
    assert list(rates[0]) == ["label", "method", "slope", "r2", "predicted", "regime"]


def test_quad_run_rows_and_budget_invariant(tmp_path, capsys):
    res = tmp_path / "r.csv"
    code, *_ = _run(["run", "--function", "quad", "--d", "2", "--p", "2", "--q", "2", "--budgets", "64,256,1024,4096", "--methods", "algorithm1,uniform", "--out", str(res)] + FAST, capsys)
    assert code == 0
    rows = read_results(res)
    assert len(rows) == 8
    assert open(res).readline().strip() == "label,d,p,q,method,N,cells,error,seconds"
    for r in rows:
        assert r.cells <= r.N
        bound = 2**r.d if r.method == "uniform" else 2 ** (r.d + 1)
        assert r.cells > r.N / bound
    rates = {r["method"]: r for r in csv.DictReader(open(tmp_path / "r_rates.csv"))}
    assert float(rates["algorithm1"]["slope"]) < float(rates["uniform"]["slope"])
    assert rates["algorithm1"]["regime"] == "theorem1"


def test_determinism_byte_identical(tmp_path, capsys):
    outs = []
    for i in range(2):
        res = tmp_path / f"r{i}.csv"
        argv = ["run", "--function", "singular_beta", "--d", "2", "--p", "inf", "--q", "1.5", "--budgets", "4,16,64", "--out", str(res), "--no-timings"] + FAST
        assert _run(argv, capsys)[0] == 0
        outs.append((res.read_bytes(), (tmp_path / f"r{i}_rates.csv").read_bytes()))
    assert outs[0] == outs[1]
    assert b",inf," in outs[0][0]


def test_lower_bound_flag(tmp_path, capsys):
    code, out, _ = _run(["run", "--function", "bump:m=2", "--d", "2", "--p", "inf", "--q", "2", "--budgets", "4", "--lower-bound-check", "--out", str(tmp_path / "b.csv")] + FAST, capsys)
    assert code == 0
    assert re.search(r"^lower_bound m=2 d=2 N=4 .* PASS$", out, re.M)


@pytest.mark.parametrize(
    "argv, fragment",
    [
        (["--budgets", "4,4"], "strictly increasing"),
        (["--budgets", "0,4"], ">= 1"),
        (["--methods", "magic"], "subset"),
        (["--p", "inf", "--q", "1"], "not embedded"),
        (["--function", "nope"], "unknown function"),
    ],
)
def test_invalid_config_one_line(tmp_path, capsys, argv, fragment):
    base = {"--function": "quad", "--d": "2", "--p": "2", "--q": "2", "--budgets": "4,16"}
    for k, v in zip(argv[::2], argv[1::2]):
        base[k] = v
    flat = [x for kv in base.items() for x in kv]
    code, _, err = _run(["run", *flat, "--out", str(tmp_path / "r.csv")], capsys)
    assert code != 0
    assert err.count("\n") == 1 and fragment in err


def test_config_file_and_override(tmp_path, capsys):
    cfg = {
        "function": "quad", "d": 2, "p": "inf", "q": 2, "budgets": [4, 16],
        "methods": ["uniform"], "quadrature": {"samples_per_cube": 1024, "gl_points_per_axis": 4},
        "outputs": {"results": str(tmp_path / "cfg.csv")},
    }
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert _run(["run", "--config", str(path), "--budgets", "4,16,64"], capsys)[0] == 0
    rows = read_results(tmp_path / "cfg.csv")
    assert [r.N for r in rows] == [4, 16, 64] and math.isinf(rows[0].p)


def test_dump_render_and_anisotropy(tmp_path, capsys):
    dump, svg = tmp_path / "p.json", tmp_path / "p.svg"
    code, *_ = _run(["run", "--function", "quad", "--d", "2", "--p", "2", "--q", "2", "--budgets", "64", "--methods", "algorithm1", "--out", str(tmp_path / "r.csv"), "--dump-partition", str(dump), "--svg", str(svg)] + FAST, capsys)
    assert code == 0
    part, values = load_partition(dump)
    assert len(part) == len(values) == 64
    text = svg.read_text()
    assert 'viewBox="0 0 1 1"' in text and text.count("<polygon") == 64
    # some slab edge is neither horizontal nor vertical
    slanted = False
    for m in re.finditer(r'points="([^"]+)"', text):
        pts = [tuple(map(float, p.split(","))) for p in m.group(1).split()]
        for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]):
            if abs(x1 - x0) > 1e-6 and abs(y1 - y0) > 1e-6:
                slanted = True
    assert slanted
    code, out, _ = _run(["render", str(dump), str(tmp_path / "again.svg")], capsys)
    assert code == 0 and "64 polygons" in out


def test_render_small_partitions(tmp_path, capsys):
    from convpart.geometry import ConvexPartition, dump_partition, slab_split, uniform_partition

    one = ConvexPartition(Cube.unit(2), tuple(slab_split(Cube.unit(2), (1.0, 0.0), 1)))
    dump_partition(one, tmp_path / "one.json", [0.5])
    assert _run(["render", str(tmp_path / "one.json"), str(tmp_path / "one.svg")], capsys)[0] == 0
    assert (tmp_path / "one.svg").read_text().count("<polygon") == 1
    four = uniform_partition(Cube.unit(2), 1)
    cp = ConvexPartition(four.domain, tuple(s for c in four.cells for s in slab_split(c, (1.0, 0.0), 1)))
    dump_partition(cp, tmp_path / "four.json", [0, 1, 2, 3])
    assert _run(["render", str(tmp_path / "four.json"), str(tmp_path / "four.svg")], capsys)[0] == 0
    assert (tmp_path / "four.svg").read_text().count("<polygon") == 4


def test_render_rejects_3d(tmp_path, capsys):
    from convpart.geometry import ConvexPartition, dump_partition, slab_split

    cp = ConvexPartition(Cube.unit(3), tuple(slab_split(Cube.unit(3), (1.0, 0.0, 0.0), 2)))
    dump_partition(cp, tmp_path / "c.json")
    code, _, err = _run(["render", str(tmp_path / "c.json"), str(tmp_path / "c.svg")], capsys)
    assert code != 0 and "rendering supports d=2 only" in err


def test_rates_and_audit_subcommands(tmp_path, capsys):
    res = tmp_path / "r.csv"
    argv = ["run", "--function", "quad", "--d", "2", "--p", "2", "--q", "2", "--budgets", "16,64,256,1024", "--out", str(res), "--trace-dir", str(tmp_path / "tr")] + FAST
    assert _run(argv, capsys)[0] == 0
    code, out, _ = _run(["rates", str(res), "--out", str(tmp_path / "again.csv")], capsys)
    assert code == 0 and (tmp_path / "again.csv").read_bytes() == (tmp_path / "r_rates.csv").read_bytes()
    trace = tmp_path / "tr" / "trace_algorithm1_N1024.csv"
    code, out, _ = _run(["audit", str(trace), "--d", "2", "--p", "2", "--q", "2"], capsys)
    assert code == 0 and out.strip().endswith("PASS")


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "convpart", "run", "--function", "quad", "--d", "2", "--p", "2", "--q", "2", "--budgets", "x"], capture_output=True, text=True)
    assert proc.returncode != 0 and proc.stderr.startswith("error:")


def test_threads_env(monkeypatch):
    from convpart.cli import ConfigError, threads

    monkeypatch.setenv("CONVPART_THREADS", "3")
    assert threads() == 3
    monkeypatch.setenv("CONVPART_THREADS", "0")
    assert threads() >= 1
    monkeypatch.setenv("CONVPART_THREADS", "-1")
    with pytest.raises(ConfigError):
        threads()
