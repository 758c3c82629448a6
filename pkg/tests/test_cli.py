import json
import time

import pytest

from oscint import bench
from oscint.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main

HEADER = "kernel,N,r_eps,scenario,seed,path,eps_b,eps_n,eps_K,eps_pha,eps_amp,T_rec,T_fac,T_app,T_d,T_dec"
ERROR_COLS = ["path", "eps_b", "eps_n", "eps_K", "eps_pha", "eps_amp"]


def _bench(tmp_path, name, *extra):
    out = tmp_path / f"{name}.csv"
    code = main(["bench", "--n", "512", "--rank-eps", "6,8", "--repeat", "1", "-q", "--threads", "1",
                 "--out", str(out), *extra])
    return code, out


def test_bench_writes_both_formats(tmp_path):
    code, out = _bench(tmp_path, "fio")
    assert code == EXIT_OK
    text = out.read_text()
    assert text.splitlines()[0] == HEADER
    csv_recs = bench.from_csv(text)
    json_recs = bench.from_json(out.with_suffix(".json").read_text())
    assert csv_recs == json_recs
    assert [r.r_eps for r in csv_recs] == [6, 8]
    assert all(r.path == "nufft" and r.eps_n <= 1e-9 and r.eps_b is not None for r in csv_recs)
    prov = json.loads(out.with_suffix(".provenance.json").read_text())
    assert prov["kernel"] == "fio1d" and prov["threads"] == 1 and "version" in prov


def test_csv_round_trip_exact():
    recs = [bench.BenchRecord("fio1d", 8, 6, "entry", 0, "bf", eps_b=0.1 + 0.2, T_d=None)]
    assert bench.from_csv(bench.to_csv(recs)) == recs
    assert bench.from_json(bench.to_json(recs)) == recs


def test_bench_deterministic_error_columns(tmp_path):
    _, a = _bench(tmp_path, "a")
    _, b = _bench(tmp_path, "b")
    ra, rb = bench.from_csv(a.read_text()), bench.from_csv(b.read_text())
    for x, y in zip(ra, rb):
        assert [getattr(x, c) for c in ERROR_COLS] == [getattr(y, c) for c in ERROR_COLS]


def test_bench_forced_paths(tmp_path):
    code, out = _bench(tmp_path, "bf", "--force-path", "bf")
    recs = bench.from_csv(out.read_text())
    assert code == EXIT_OK and all(r.path == "bf" and r.eps_n is None for r in recs)
    code, out = _bench(tmp_path, "nu", "--force-path", "nufft")
    recs = bench.from_csv(out.read_text())
    assert code == EXIT_OK and all(r.path == "nufft" and r.eps_b is None for r in recs)


def test_bench_forced_nufft_not_applicable(capsys):
    code = main(["bench", "--kernel", "hankel", "--n", "256", "--force-path", "nufft",
                 "--repeat", "1", "-q"])
    assert code == EXIT_USAGE


def test_bench_tolerance_breach(tmp_path, capsys):
    code, _ = _bench(tmp_path, "tight", "--max-eps-b", "1e-14")
    assert code == EXIT_FAIL
    assert "tolerance breach" in capsys.readouterr().err


def test_bench_stdout_json(capsys):
    code = main(["bench", "--n", "256", "--repeat", "1", "-q", "--format", "json", "--no-direct"])
    assert code == EXIT_OK
    recs = bench.from_json(capsys.readouterr().out)
    assert recs[0].N == 256 and recs[0].T_d is None


@pytest.mark.parametrize("argv", [
    ["bench", "--n", "0"],
    ["bench", "--n", "1000"],
    ["bench", "--n", "abc"],
    ["bench", "--n", "256", "--bogus"],
    ["bench", "--n", "256", "--kernel", "nope"],
    ["bench", "--n", "256", "--threads", "0"],
    ["scaling", "--n", "1024"],
    ["scaling", "--n", "256,512", "--timings", "T_x"],
    ["verify", "--suite", "nonsense"],
    [],
])
def test_usage_errors(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == EXIT_USAGE


def test_scaling_reports_growth(tmp_path, capsys):
    out = tmp_path / "sc.json"
    code = main(["scaling", "--n", "256,1024", "--rank-eps", "6", "--repeat", "1", "-q",
                 "--max-growth", "1000", "--max-dec-growth", "1000", "--out", str(out)])
    assert code == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert {l.split()[0] for l in lines} == set(bench.TIMINGS)
    prov = json.loads(out.with_suffix(".provenance.json").read_text())
    assert set(prov["growth"]) == set(bench.TIMINGS)


def test_scaling_flags_growth(capsys):
    code = main(["scaling", "--n", "256,1024", "--rank-eps", "6", "--repeat", "1", "-q",
                 "--timings", "T_fac", "--max-growth", "0.01"])
    assert code == EXIT_FAIL
    assert "FLAG" in capsys.readouterr().out


def test_growth_factors_normalized():
    recs = [bench.BenchRecord("k", n, 6, "entry", 0, "bf", T_app=t) for n, t in [(1024, 1.0), (16384, 25.0)]]
    ((a, b, g),) = bench.growth_factors(recs, "T_app")
    assert (a, b) == (1024, 16384) and g == pytest.approx(5.0)


def test_verify_all_pass(capsys):
    t0 = time.perf_counter()
    assert main(["verify"]) == EXIT_OK
    assert time.perf_counter() - t0 < 60
    out = capsys.readouterr().out
    assert "FAIL" not in out and "checks passed" in out


def test_verify_suite_filter(capsys):
    assert main(["verify", "--suite", "nufft,interp"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "[nufft]" in out and "[interp]" in out and "[butterfly]" not in out


def test_verify_list(capsys):
    assert main(["verify", "--list"]) == EXIT_OK
    assert len(capsys.readouterr().out.splitlines()) == 8


def test_verify_fault_injection(capsys):
    assert main(["verify", "--suite", "butterfly", "--inject-fault", "xi-recursion"]) == EXIT_FAIL
    out = capsys.readouterr().out
    fail = out.split("failing invariants:")[1]
    assert "butterfly recursion" in fail
