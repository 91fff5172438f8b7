"""Benchmark harness: single runs, size sweeps and CSV records."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .id_compress import ProxyStrategy, tucker_id
from .kernels import DENSE_CAP, dense_oracle, make_kernel
from .matrix_butterfly import mbf_apply_tensor, mbf_construct
from .tensor_butterfly import (
    SCALAR_BYTES,
    exact_columns_sum,
    sample_delta_input,
    tbf_construct,
    tbf_contract,
    tbf_memory,
)
from .tensor_core import DTYPE, MultiSet

log = logging.getLogger(__name__)

ALGORITHMS = ("tensor-bf", "matrix-bf", "tucker-id", "dense")
CSV_HEADER = ("kernel", "d", "n", "tol", "algo", "L", "factor_time_s", "apply_time_s",
              "memory_bytes", "r", "r_min", "rel_error", "seed", "n_v")
SWEEP_METRICS = ("factor_time_s", "apply_time_s", "memory_bytes")
APPLY_REPEATS = 3


@dataclass(frozen=True)
class RunSpec:
    kernel: str
    d: int
    n: int
    tol: float
    algo: str
    L: int | None = None
    n_v: int = 1
    seed: int = 0
    n_samples: int = 10
    bitrev: str | None = None
    proxies: ProxyStrategy = ProxyStrategy()
    dense_cap: int = DENSE_CAP

    def __post_init__(self):
        if self.algo not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algo!r}; expected one of {', '.join(ALGORITHMS)}")
        if self.n_v < 1 or self.n_samples < 1:
            raise ValueError("n_v and n_samples must be >= 1")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")


@dataclass
class BenchRecord:
    kernel: str
    d: int
    n: int
    tol: float
    algo: str
    L: int | None
    factor_time_s: float
    apply_time_s: float
    memory_bytes: int
    r: int | None
    r_min: int | None
    rel_error: float | None
    seed: int
    n_v: int
    breakdown: dict = field(default_factory=dict, compare=False)

    def passes_gate(self) -> bool:
        """Desk-scale accuracy gate: error within 10 tol (when measured)."""
        if self.rel_error is None or self.tol < 1e-8:
            return True
        return self.rel_error <= 10 * self.tol


def _random_input(shape, n_v, seed):
    rng = np.random.default_rng(seed)
    return (rng.standard_normal(tuple(shape) + (n_v,)) + 1j * rng.standard_normal(tuple(shape) + (n_v,))).astype(DTYPE)


def _median_time(fn, repeats=APPLY_REPEATS):
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return float(np.median(times))


def _rel(a, b):
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / nb) if nb else float(np.linalg.norm(a))


def run_single(spec: RunSpec) -> BenchRecord:
    """Factor, apply to a seeded random input, and measure error and memory."""
    kern = make_kernel(spec.kernel, spec.n, spec.d, seed=spec.seed, bitrev=spec.bitrev)
    d = kern.d
    F = _random_input(kern.col_shape, spec.n_v, spec.seed)
    Fe, flat = sample_delta_input(kern.col_shape, spec.n_samples, spec.seed + 1)
    L = None
    r = r_min = None

    if spec.algo == "dense":
        entries = int(np.prod(kern.row_shape)) * int(np.prod(kern.col_shape))
        if entries > spec.dense_cap:
            raise ValueError(f"dense oracle refused: {entries} entries exceed the cap of {spec.dense_cap}")
        t = time.perf_counter()
        K = dense_oracle(kern, spec.dense_cap)
        factor = time.perf_counter() - t
        Fm = F.reshape(-1, spec.n_v, order="F")
        apply = _median_time(lambda: K @ Fm)
        approx = (K @ Fe.reshape(-1, 1, order="F")).reshape(kern.row_shape, order="F")
        memory = K.size * SCALAR_BYTES
        breakdown = {"dense": memory}
    elif spec.algo == "tensor-bf":
        t = time.perf_counter()
        bf = tbf_construct(kern, L=spec.L, tol=spec.tol, proxies=spec.proxies, seed=spec.seed)
        factor = time.perf_counter() - t
        apply = _median_time(lambda: tbf_contract(bf, F))
        approx = tbf_contract(bf, Fe)
        rep = tbf_memory(bf)
        memory, breakdown = rep.total_bytes, rep.breakdown
        L, r, r_min = bf.L, bf.r, bf.r_min
    elif spec.algo == "matrix-bf":
        t = time.perf_counter()
        bf = mbf_construct(kern, L=spec.L, tol=spec.tol, proxies=spec.proxies, seed=spec.seed)
        factor = time.perf_counter() - t
        apply = _median_time(lambda: mbf_apply_tensor(bf, F, kern.row_shape, kern.col_shape))
        approx = mbf_apply_tensor(bf, Fe[..., None], kern.row_shape, kern.col_shape)[..., 0]
        breakdown = bf.memory_breakdown()
        memory = sum(breakdown.values())
        L, r, r_min = bf.L, bf.r, bf.r_min
    else:
        t = time.perf_counter()
        T = tucker_id(kern, MultiSet.full(kern.row_shape), MultiSet.full(kern.col_shape),
                      spec.tol, spec.proxies, spec.seed)
        factor = time.perf_counter() - t
        apply = _median_time(lambda: T.contract(F))
        approx = T.contract(Fe[..., None])[..., 0]
        breakdown = {k: v * SCALAR_BYTES for k, v in T.scalar_counts().items()}
        memory = T.memory_bytes()
        L, r, r_min = 0, max(T.ranks), min(T.ranks)

    exact = exact_columns_sum(kern, flat)
    err = _rel(approx, exact)
    return BenchRecord(spec.kernel, d, spec.n, spec.tol, spec.algo, L, factor, apply, int(memory),
                       r, r_min, err, spec.seed, spec.n_v, breakdown)


@dataclass
class SweepResult:
    records: list
    slopes: dict
    failures: list

    def slope(self, algo: str, metric: str) -> float:
        return self.slopes[(algo, metric)]


def loglog_slope(ns: Sequence[int], values: Sequence[float], d: int) -> float:
    """Least-squares slope of log(value) against log(n^d)."""
    x = np.log(np.asarray(ns, dtype=float) ** d)
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def _attempt(spec: RunSpec):
    try:
        return run_single(spec), None
    except Exception as exc:  # recorded, not fatal
        return None, f"{type(exc).__name__}: {exc}"


def run_sweep(spec: RunSpec, ns: Sequence[int], algos: Sequence[str] | None = None,
              out: str | Path | None = None, jobs: int = 1) -> SweepResult:
    """Run ``spec`` for each size and algorithm; fit log-log cost slopes.

    A failing run is logged and recorded in ``failures``; the sweep goes on.
    ``jobs > 1`` runs independent cases in worker processes, which is only
    sensible when timings will not be compared.
    """
    ns = list(ns)
    if len(ns) < 3:
        raise ValueError("a sweep needs at least 3 sizes")
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    algos = list(algos) if algos else [spec.algo]
    subs = [replace(spec, n=n, algo=algo) for algo in algos for n in ns]
    if jobs == 1:
        outcomes = [_attempt(sub) for sub in subs]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_attempt, subs))
    records, failures, slopes = [], [], {}
    for sub, (rec, err) in zip(subs, outcomes):
        if rec is None:
            log.warning("run %s n=%d failed: %s", sub.algo, sub.n, err)
            failures.append((sub, err))
        else:
            records.append(rec)
    for algo in algos:
        done = [rec for rec in records if rec.algo == algo]
        if len(done) >= 2:
            for metric in SWEEP_METRICS:
                vals = [getattr(rec, metric) for rec in done]
                if min(vals) > 0:
                    slopes[(algo, metric)] = loglog_slope([rec.n for rec in done], vals, done[0].d)
    if out is not None:
        emit_csv(records, out)
    return SweepResult(records, slopes, failures)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_csv(records: Sequence[BenchRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in records:
            w.writerow([_fmt(getattr(rec, name)) for name in CSV_HEADER])


_INT = {"d", "n", "L", "memory_bytes", "r", "r_min", "seed", "n_v"}
_FLOAT = {"tol", "factor_time_s", "apply_time_s", "rel_error"}


def _parse(name, text):
    if text == "":
        return None
    if name in _INT:
        return int(text)
    if name in _FLOAT:
        return float(text)
    return text


def read_csv(path) -> list[BenchRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError("unexpected CSV header")
    return [BenchRecord(**{k: _parse(k, v) for k, v in zip(CSV_HEADER, row)}) for row in rows[1:]]
