import numpy as np
import pytest

from oio_butterfly.bench import (
    CSV_HEADER,
    BenchRecord,
    RunSpec,
    emit_csv,
    loglog_slope,
    read_csv,
    run_single,
    run_sweep,
)


def test_dft_run():
    rec = run_single(RunSpec("dft", 1, 64, 1e-6, "tensor-bf"))
    assert rec.rel_error <= 1e-4
    assert rec.L == 3 and rec.r >= rec.r_min > 0
    assert rec.memory_bytes == sum(rec.breakdown.values())
    assert rec.passes_gate()


def test_rank_grows_as_tol_tightens():
    ranks = [run_single(RunSpec("green-plates", 2, 32, tol, "tensor-bf")).r for tol in (1e-2, 1e-3, 1e-4, 1e-5)]
    assert ranks == sorted(ranks)


@pytest.mark.parametrize("algo", ["matrix-bf", "tucker-id"])
def test_other_algorithms(algo):
    rec = run_single(RunSpec("green-plates", 2, 16, 1e-4, algo))
    assert rec.rel_error <= 1e-3
    assert rec.memory_bytes > 0


def test_dense_run_and_cap():
    rec = run_single(RunSpec("radon-2d", 2, 8, 1e-3, "dense"))
    assert rec.rel_error <= 1e-13
    assert rec.r is None and rec.memory_bytes == 16 * 64 * 64
    with pytest.raises(ValueError, match="refused"):
        run_single(RunSpec("radon-2d", 2, 16, 1e-3, "dense", dense_cap=1000))


def test_spec_validation():
    with pytest.raises(ValueError):
        RunSpec("dft", 1, 64, 1e-6, "fft")
    with pytest.raises(ValueError):
        RunSpec("dft", 1, 64, 0.0, "dense")
    with pytest.raises(ValueError):
        RunSpec("dft", 1, 64, 1e-3, "dense", n_v=0)


def test_runs_are_deterministic_apart_from_timing():
    spec = RunSpec("nudft", 2, 16, 1e-4, "tensor-bf", seed=3)
    a, b = run_single(spec), run_single(spec)
    for name in CSV_HEADER:
        if not name.endswith("_time_s"):
            assert getattr(a, name) == getattr(b, name)


def test_gate():
    rec = run_single(RunSpec("dft", 1, 32, 1e-3, "tensor-bf"))
    rec.rel_error = 0.5
    assert not rec.passes_gate()
    rec.tol = 1e-10
    assert rec.passes_gate()


def test_loglog_slope():
    ns = [8, 16, 32]
    assert loglog_slope(ns, [n**2 for n in ns], 2) == pytest.approx(1.0)
    assert loglog_slope(ns, [n**3 for n in ns], 2) == pytest.approx(1.5)


def test_sweep_requires_three_sizes():
    with pytest.raises(ValueError):
        run_sweep(RunSpec("dft", 1, 32, 1e-3, "tensor-bf"), [32, 64])


def test_sweep_records_failures_and_continues(tmp_path):
    spec = RunSpec("dft", 1, 32, 1e-3, "tensor-bf", L=3)
    # n = 12 cannot carry three levels
    res = run_sweep(spec, [32, 12, 64, 128], out=tmp_path / "s.csv")
    assert [r.n for r in res.records] == [32, 64, 128]
    assert len(res.failures) == 1 and res.failures[0][0].n == 12
    assert ("tensor-bf", "memory_bytes") in res.slopes
    assert len(read_csv(tmp_path / "s.csv")) == 3


def test_csv_layout(tmp_path):
    path = tmp_path / "empty.csv"
    emit_csv([], path)
    assert path.read_text() == ",".join(CSV_HEADER) + "\n"
    recs = [run_single(RunSpec("dft", 1, 32, 1e-3, a)) for a in ("tensor-bf", "dense")]
    emit_csv(recs, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 3
    assert lines[2].split(",")[CSV_HEADER.index("r")] == ""


def test_csv_roundtrip_is_fieldwise_exact(tmp_path):
    recs = [run_single(RunSpec("radon-2d", 2, 16, 1e-3, a)) for a in ("tensor-bf", "tucker-id", "dense")]
    recs[0].factor_time_s = 0.1 + 0.2  # not representable in short decimal form
    path = tmp_path / "r.csv"
    emit_csv(recs, path)
    back = read_csv(path)
    for a, b in zip(recs, back):
        for name in CSV_HEADER:
            assert getattr(a, name) == getattr(b, name), name


def test_read_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_csv(path)


def test_record_equality_ignores_breakdown():
    a = BenchRecord("dft", 1, 8, 1e-3, "dense", None, 0.0, 0.0, 1, None, None, 0.0, 0, 1, {"x": 1})
    b = BenchRecord("dft", 1, 8, 1e-3, "dense", None, 0.0, 0.0, 1, None, None, 0.0, 0, 1)
    assert a == b
    assert np.isfinite(a.tol)


def test_parallel_sweep_matches_serial():
    spec = RunSpec("dft", 1, 32, 1e-4, "tensor-bf")
    a = run_sweep(spec, [32, 64, 128])
    b = run_sweep(spec, [32, 64, 128], jobs=2)
    for x, y in zip(a.records, b.records):
        assert (x.n, x.r, x.memory_bytes, x.rel_error) == (y.n, y.r, y.memory_bytes, y.rel_error)
    with pytest.raises(ValueError):
        run_sweep(spec, [32, 64, 128], jobs=0)
