"""Interpolative decompositions built on column-pivoted Householder QR.

Conventions
-----------
* A column ID of ``K`` (``m x n``) returns skeleton column positions ``sk``
  (0-based, sorted) and an interpolation matrix ``X`` (``r x n``) with
  ``K ~= K[:, sk] @ X`` and ``X[:, sk] == I``.
* A row ID returns ``U`` (``m x r``) with ``K ~= U @ K[sk, :]``.
* Truncation: the rank is the smallest ``k`` with
  ``|R[k, k]| <= tol * |R[0, 0]|`` (0-based), i.e. a relative rule on the
  diagonal of the pivoted triangular factor.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .tensor_core import DTYPE, MultiSet, eval_grid, mode_product

log = logging.getLogger(__name__)

INTERP_WARN = 10.0


@dataclass(frozen=True)
class ColumnID:
    skeleton: np.ndarray
    interp: np.ndarray
    rank: int
    saturated: bool = False
    max_interp: float = 0.0


@dataclass(frozen=True)
class RowID:
    skeleton: np.ndarray
    interp: np.ndarray
    rank: int
    saturated: bool = False
    max_interp: float = 0.0


@dataclass(frozen=True)
class HybridID:
    row_skeleton: np.ndarray
    col_skeleton: np.ndarray
    row_interp: np.ndarray
    col_interp: np.ndarray
    core: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.row_interp @ self.core @ self.col_interp


def column_id(K: np.ndarray, tol: float, max_rank: int | None = None) -> ColumnID:
    K = np.asarray(K)
    if K.ndim != 2 or K.size == 0:
        raise ValueError("column_id needs a nonempty matrix")
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    m, n = K.shape
    R, piv = sla.qr(K, mode="r", pivoting=True, check_finite=False)
    kmax = min(m, n)
    diag = np.abs(np.diagonal(R)[:kmax])
    if diag[0] == 0.0:
        r = 0
    else:
        below = np.nonzero(diag <= tol * diag[0])[0]
        r = int(below[0]) if below.size else kmax
    saturated = False
    if max_rank is not None and r > max_rank:
        r, saturated = int(max_rank), True

    X = np.zeros((r, n), dtype=np.result_type(K, DTYPE))
    if r:
        X[:, piv[:r]] = np.eye(r)
        if r < n:
            X[:, piv[r:]] = sla.solve_triangular(R[:r, :r], R[:r, r:n], check_finite=False)
    skel = piv[:r]
    order = np.argsort(skel, kind="stable")
    skel = skel[order]
    X = X[order]
    bound = float(np.abs(X).max()) if X.size else 0.0
    if bound > INTERP_WARN:
        log.warning("interpolation matrix entry %.3g exceeds %.0f", bound, INTERP_WARN)
    return ColumnID(skel.astype(np.int64), X, r, saturated, bound)


def row_id(K: np.ndarray, tol: float, max_rank: int | None = None) -> RowID:
    c = column_id(np.asarray(K).T, tol, max_rank)
    return RowID(c.skeleton, c.interp.T, c.rank, c.saturated, c.max_interp)


def hybrid_id(K: np.ndarray, tol: float) -> HybridID:
    """``K ~= U @ K[rs][:, cs] @ V`` from a column ID followed by a row ID."""
    K = np.asarray(K)
    c = column_id(K, tol)
    rw = row_id(K[:, c.skeleton], tol)
    core = K[np.ix_(rw.skeleton, c.skeleton)]
    return HybridID(rw.skeleton, c.skeleton, rw.interp, c.interp, core)


# -- proxy indices -------------------------------------------------------------

PROXY_MODES = ("all", "uniform-random", "evenly-spaced")


@dataclass(frozen=True)
class ProxyStrategy:
    """How proxy rows are drawn for IDs on large index sets.

    ``q`` is the oversampling factor over the current rank estimate,
    ``retries`` the number of proxy doublings allowed on saturation, and
    ``rank_init`` the initial rank estimate.
    """

    mode: str = "uniform-random"
    q: float = 16.0
    retries: int = 3
    rank_init: int = 8

    def __post_init__(self):
        if self.mode not in PROXY_MODES:
            raise ValueError(f"unknown proxy mode {self.mode!r}")
        if self.q < 1 or self.retries < 0 or self.rank_init < 1:
            raise ValueError("invalid proxy parameters")

    def count(self, extent: int, rank_estimate: int) -> int:
        if self.mode == "all":
            return extent
        return int(min(extent, max(1, int(np.ceil(self.q * rank_estimate)))))


def proxy_rng(seed: int, *key: int) -> np.random.Generator:
    """A fresh generator for one ID call, derived from the base seed and a key."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, *(int(k) for k in key)])


def _proxy_offsets(extent: int, count: int, mode: str, rng: np.random.Generator | None) -> np.ndarray:
    if count >= extent or mode == "all":
        return np.arange(extent, dtype=np.int64)
    if mode == "evenly-spaced":
        return np.arange(count, dtype=np.int64) * (extent // count)
    return np.sort(rng.choice(extent, size=count, replace=False)).astype(np.int64)


def select_proxies(extent: int, rank_estimate: int, strategy: ProxyStrategy = ProxyStrategy(),
                   seed=0) -> np.ndarray:
    """Sorted 1-based proxy indices out of ``1..extent``."""
    if extent < 1:
        raise ValueError("extent must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    count = strategy.count(extent, rank_estimate)
    return _proxy_offsets(extent, count, strategy.mode, rng) + 1


@dataclass(frozen=True)
class ModeID:
    """Column ID of a (proxy-sampled) unfolding; skeleton holds global indices."""

    skeleton: np.ndarray
    interp: np.ndarray
    rank: int
    saturated: bool
    proxies: int


def proxy_rows(extents: Sequence[int], count: int, mode: str,
               rng: np.random.Generator | None) -> list[np.ndarray]:
    """Coupled per-mode proxy offsets describing ``count`` sample rows.

    Each mode ``j`` gets its own proxy set of ``min(extents[j], count)``
    offsets. The sets are tiled to length ``count`` and, except for the
    first mode, randomly permuted, so every proxy value of every mode occurs
    in some sample row while the row count stays ``count`` instead of the
    size of the full proxy grid. Returns one offset array per mode.
    """
    cols = []
    for j, n in enumerate(extents):
        p = _proxy_offsets(int(n), min(int(n), count), mode, rng)
        tiled = np.resize(p, count)
        if j > 0 and rng is not None:
            tiled = tiled[rng.permutation(count)]
        cols.append(tiled)
    return cols


def unfolding_id(kernel, row_sets: Sequence[np.ndarray], col_sets: Sequence[np.ndarray], mode: int,
                 tol: float, strategy: ProxyStrategy, rng: np.random.Generator,
                 rank_estimate: int) -> ModeID:
    """ID of the unfolding of ``K(row_sets, col_sets)`` along 0-based ``mode``.

    ``mode`` counts row modes first (``0..d-1``) then column modes
    (``d..2d-1``). Candidate columns are the entries of that mode's index list.
    When the remaining ``2d - 1`` index sets span few enough rows, all rows
    are used; otherwise rows come from :func:`proxy_rows`. The sample is
    doubled while ``q`` times the found rank exceeds the number of rows.
    """
    d = kernel.d
    sets = [np.asarray(s, dtype=np.int64) for s in list(row_sets) + list(col_sets)]
    cand = sets[mode]
    others = [k for k in range(2 * d) if k != mode]
    oshape = tuple(len(sets[k]) for k in others)
    total = int(np.prod(oshape))
    count = strategy.count(total, rank_estimate)
    for attempt in range(strategy.retries + 1):
        if count >= total or strategy.mode == "all":
            sub = np.unravel_index(np.arange(total), oshape, order="F")
            nrows = total
        else:
            sub = proxy_rows(oshape, count, strategy.mode, rng)
            nrows = count
        idx = [None] * (2 * d)
        for k, pos in zip(others, sub):
            idx[k] = sets[k][pos][:, None]
        idx[mode] = cand[None, :]
        M = kernel.evaluate(idx[:d], idx[d:])
        cid = column_id(M, tol)
        saturated = nrows < total and strategy.q * cid.rank > nrows
        if not saturated or attempt == strategy.retries:
            break
        count = min(total, 2 * nrows)
    if saturated:
        log.debug("proxy saturation: rank %d with %d proxy rows of %d", cid.rank, nrows, total)
    return ModeID(cand[cid.skeleton], cid.interp, cid.rank, bool(saturated), nrows)


# -- Tucker-like ID --------------------------------------------------------------

@dataclass
class TuckerID:
    """``K ~= core x_k U[k] (k<d) x_{d+k} V[k].T``.

    ``row_skeletons[k]`` / ``col_skeletons[k]`` are 0-based global indices of
    the selected entries along row mode ``k`` / column mode ``k``;
    ``U[k]`` is ``|rows_k| x r`` and ``V[k]`` is ``r x |cols_k|``.
    """

    row_offsets: tuple[int, ...]
    col_offsets: tuple[int, ...]
    row_skeletons: list[np.ndarray]
    col_skeletons: list[np.ndarray]
    U: list[np.ndarray]
    V: list[np.ndarray]
    core: np.ndarray
    saturated: bool = False
    ranks: list[int] = field(default_factory=list)

    @property
    def d(self) -> int:
        return len(self.U)

    def reconstruct(self) -> np.ndarray:
        t = self.core
        for k in range(self.d):
            t = mode_product(t, k + 1, self.U[k])
        for k in range(self.d):
            t = mode_product(t, self.d + k + 1, self.V[k].T)
        return t

    def contract(self, F: np.ndarray) -> np.ndarray:
        """``K x_{d+1..2d} F`` for ``F`` of shape ``col extents + (n_v,)``."""
        d = self.d
        t = np.asarray(F)
        for k in range(d):
            t = mode_product(t, k + 1, self.V[k])
        t = np.tensordot(self.core, t, axes=(list(range(d, 2 * d)), list(range(d))))
        for k in range(d):
            t = mode_product(t, k + 1, self.U[k])
        return t

    def scalar_counts(self) -> dict:
        return {
            "U": int(sum(u.size for u in self.U)),
            "V": int(sum(v.size for v in self.V)),
            "cores": int(self.core.size),
        }

    def memory_bytes(self) -> int:
        return 16 * sum(self.scalar_counts().values())


def tucker_id(kernel, rows: MultiSet, cols: MultiSet, tol: float,
              proxies: ProxyStrategy = ProxyStrategy(), seed: int = 0) -> TuckerID:
    """Tucker-like ID of ``K(rows, cols)``: one column ID per unfolding.

    The rank estimate for each mode is the running maximum of the ranks of
    the modes processed before it.
    """
    d = kernel.d
    if rows.d != d or cols.d != d:
        raise ValueError("multi-set mode count does not match the kernel")
    row_sets = [np.arange(r.start - 1, r.stop - 1) for r in rows.ranges]
    col_sets = [np.arange(r.start - 1, r.stop - 1) for r in cols.ranges]
    r_est = proxies.rank_init
    skels, mats, ranks = [], [], []
    saturated = False
    for mode in range(2 * d):
        res = unfolding_id(kernel, row_sets, col_sets, mode, tol, proxies,
                           proxy_rng(seed, 7, mode), r_est)
        skels.append(res.skeleton)
        mats.append(res.interp)
        ranks.append(res.rank)
        saturated |= res.saturated
        r_est = max(r_est, res.rank)
    core = eval_grid(kernel, skels[:d], skels[d:])
    return TuckerID(
        row_offsets=tuple(r.start - 1 for r in rows.ranges),
        col_offsets=tuple(r.start - 1 for r in cols.ranges),
        row_skeletons=skels[:d],
        col_skeletons=skels[d:],
        U=[m.T for m in mats[:d]],
        V=mats[d:],
        core=core,
        saturated=saturated,
        ranks=ranks,
    )
