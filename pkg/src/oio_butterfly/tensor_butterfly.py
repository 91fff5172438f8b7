"""Tensor butterfly decomposition of 2d-mode oscillatory operator tensors.

Every mode carries an ``L``-level dyadic tree. Target trees are cut at level
``Lt = L // 2`` and source trees at ``Ls = L - Lt`` (equal for even ``L``);
each pair of a target multi-set ``t`` at level ``Lt`` and a source multi-set
``s`` at level ``Ls`` owns a core subtensor ``K(tbar, sbar)``.

Keys used throughout (all positions 0-based):

* source side, level ``0 <= l <= Lt``: ``(l, s, tau, k, nu)`` where ``s`` is
  the source multi-set position at level ``Ls``, ``tau`` the target
  multi-set position at level ``l``, ``k`` the mode and ``nu`` the position
  inside the subtree of ``s[k]`` at relative depth ``Lt - l``.
  ``l == 0`` holds leaf interpolation matrices ``V`` (``r x |nu|``);
  ``l >= 1`` holds transfer matrices ``W`` (``r x (|nubar1| + |nubar2|)``).
* target side, level ``0 <= l <= Ls``: ``(l, t, nu, k, tau)`` mirroring the
  above, with ``U`` (``|tau| x r``) at ``l == 0`` and ``P``
  (``(|taubar1| + |taubar2|) x r``) above.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .id_compress import ProxyStrategy, proxy_rng, unfolding_id
from .tensor_core import DTYPE, DyadicTree, block_mode_product, eval_grid

SCALAR_BYTES = np.dtype(DTYPE).itemsize
DEFAULT_LEAF = 8


def default_levels(n: int, leaf_size: int = DEFAULT_LEAF) -> int:
    """Largest ``L`` with ``n / 2**L >= leaf_size`` and ``2**L`` dividing ``n``."""
    L = 0
    while n % (1 << (L + 1)) == 0 and (n >> (L + 1)) >= leaf_size:
        L += 1
    return L


@dataclass(frozen=True)
class MemoryReport:
    total_bytes: int
    breakdown: dict

    @property
    def scalars(self) -> int:
        return self.total_bytes // SCALAR_BYTES


@dataclass
class TensorButterfly:
    d: int
    row_shape: tuple[int, ...]
    col_shape: tuple[int, ...]
    L: int
    tol: float
    seed: int
    strategy: ProxyStrategy
    col_mats: dict = field(default_factory=dict)
    col_skel: dict = field(default_factory=dict)
    row_mats: dict = field(default_factory=dict)
    row_skel: dict = field(default_factory=dict)
    cores: dict = field(default_factory=dict)
    ranks: list = field(default_factory=list)
    saturated: int = 0

    @property
    def Lt(self) -> int:
        return self.L // 2

    @property
    def Ls(self) -> int:
        return self.L - self.L // 2

    @property
    def row_trees(self) -> list[DyadicTree]:
        return [DyadicTree(m, self.L) for m in self.row_shape]

    @property
    def col_trees(self) -> list[DyadicTree]:
        return [DyadicTree(n, self.L) for n in self.col_shape]

    @property
    def r(self) -> int:
        return max(self.ranks) if self.ranks else 0

    @property
    def r_min(self) -> int:
        return min(self.ranks) if self.ranks else 0

    @property
    def middle_pairs(self) -> int:
        return len(self.cores)


def _node(tree: DyadicTree, level: int, pos: int) -> np.ndarray:
    r = tree.node(level, pos)
    return np.arange(r.start, r.stop, dtype=np.int64)


def tbf_construct(kernel, L: int | None = None, tol: float = 1e-6,
                  proxies: ProxyStrategy = ProxyStrategy(), seed: int = 0,
                  leaf_size: int = DEFAULT_LEAF) -> TensorButterfly:
    """Build the tensor butterfly of ``kernel``.

    Step 1 computes source-side factors level by level, each from an ID of
    the mode-(d+k) unfolding of ``K(tau, s_{k <- nu})`` (or of the children's
    skeleton union above the leaves) restricted to proxy rows. Step 2 mirrors
    this on the target side. Step 3 evaluates the middle-level cores.
    Proxy counts follow ``q * r_est`` where ``r_est`` is the running maximum
    rank of all completed levels (at least ``proxies.rank_init``).
    """
    d = kernel.d
    if L is None:
        L = default_levels(min(kernel.row_shape + kernel.col_shape), leaf_size)
    if L < 0:
        raise ValueError("L must be nonnegative")
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    rt = [DyadicTree(m, L) for m in kernel.row_shape]
    ct = [DyadicTree(n, L) for n in kernel.col_shape]
    bf = TensorButterfly(d, kernel.row_shape, kernel.col_shape, L, tol, seed, proxies)
    Lt, Ls = bf.Lt, bf.Ls
    r_est = proxies.rank_init

    # (1) source side: V at l = 0, W above
    for l in range(Lt + 1):
        level_ranks = []
        for s in product(range(1 << Ls), repeat=d):
            s_sets = [_node(ct[k], Ls, s[k]) for k in range(d)]
            for tau in product(range(1 << l), repeat=d):
                tau_sets = [_node(rt[k], l, tau[k]) for k in range(d)]
                ptau = tuple(x >> 1 for x in tau)
                for k in range(d):
                    for nu in range(1 << (Lt - l)):
                        if l == 0:
                            cand = _node(ct[k], L, (s[k] << Lt) + nu)
                        else:
                            cand = np.concatenate([bf.col_skel[(l - 1, s, ptau, k, 2 * nu)],
                                                   bf.col_skel[(l - 1, s, ptau, k, 2 * nu + 1)]])
                        csets = list(s_sets)
                        csets[k] = cand
                        res = unfolding_id(kernel, tau_sets, csets, d + k, tol, proxies,
                                           proxy_rng(seed, 0, l, *s, *tau, k, nu), r_est)
                        assert np.isin(res.skeleton, cand).all()
                        key = (l, s, tau, k, nu)
                        bf.col_skel[key] = res.skeleton
                        bf.col_mats[key] = res.interp
                        bf.saturated += res.saturated
                        level_ranks.append(res.rank)
        bf.ranks.extend(level_ranks)
        r_est = max(r_est, max(level_ranks))

    # (2) target side: U at l = 0, P above
    for l in range(Ls + 1):
        level_ranks = []
        for t in product(range(1 << Lt), repeat=d):
            t_sets = [_node(rt[k], Lt, t[k]) for k in range(d)]
            for nu in product(range(1 << l), repeat=d):
                nu_sets = [_node(ct[k], l, nu[k]) for k in range(d)]
                pnu = tuple(x >> 1 for x in nu)
                for k in range(d):
                    for tau in range(1 << (Ls - l)):
                        if l == 0:
                            cand = _node(rt[k], L, (t[k] << Ls) + tau)
                        else:
                            cand = np.concatenate([bf.row_skel[(l - 1, t, pnu, k, 2 * tau)],
                                                   bf.row_skel[(l - 1, t, pnu, k, 2 * tau + 1)]])
                        rsets = list(t_sets)
                        rsets[k] = cand
                        res = unfolding_id(kernel, rsets, nu_sets, k, tol, proxies,
                                           proxy_rng(seed, 1, l, *t, *nu, k, tau), r_est)
                        assert np.isin(res.skeleton, cand).all()
                        key = (l, t, nu, k, tau)
                        bf.row_skel[key] = res.skeleton
                        bf.row_mats[key] = res.interp.T
                        bf.saturated += res.saturated
                        level_ranks.append(res.rank)
        bf.ranks.extend(level_ranks)
        r_est = max(r_est, max(level_ranks))

    # (3) middle-level cores (stored uncompressed)
    for s in product(range(1 << Ls), repeat=d):
        for t in product(range(1 << Lt), repeat=d):
            tb = [bf.row_skel[(Ls, t, s, k, 0)] for k in range(d)]
            sb = [bf.col_skel[(Lt, s, t, k, 0)] for k in range(d)]
            bf.cores[(t, s)] = eval_grid(kernel, tb, sb)
    return bf


def _slices(trees, level, pos):
    return tuple(slice(tr.node(level, p).start, tr.node(level, p).stop) for tr, p in zip(trees, pos))


def tbf_contract(bf: TensorButterfly, F: np.ndarray) -> np.ndarray:
    """``G = K x_{d+1..2d} F`` through the factorization.

    ``F`` has shape ``col_shape + (n_v,)`` (a trailing ``n_v`` axis may be
    omitted for a single input); the result has ``row_shape + (n_v,)``.
    """
    d, L, Lt, Ls = bf.d, bf.L, bf.Lt, bf.Ls
    F = np.asarray(F)
    single = F.ndim == d
    if single:
        F = F[..., None]
    if F.ndim != d + 1 or F.shape[:d] != bf.col_shape:
        raise ValueError(f"input of shape {F.shape} does not match column extents {bf.col_shape}")
    rt, ct = bf.row_trees, bf.col_trees
    root = (0,) * d
    src = list(product(range(1 << Ls), repeat=d))
    tgt = list(product(range(1 << Lt), repeat=d))

    # (1) source-side factors, one intermediate per (tau, s)
    cur = {}
    for s in src:
        x = F[_slices(ct, Ls, s)]
        for k in range(d):
            x = block_mode_product(x, k, [bf.col_mats[(0, s, root, k, nu)] for nu in range(1 << Lt)])
        cur[(root, s)] = x
    for l in range(1, Lt + 1):
        nxt = {}
        nnu = 1 << (Lt - l)
        for s in src:
            for tau in product(range(1 << l), repeat=d):
                x = cur[(tuple(v >> 1 for v in tau), s)]
                for k in range(d):
                    x = block_mode_product(x, k, [bf.col_mats[(l, s, tau, k, nu)] for nu in range(nnu)])
                nxt[(tau, s)] = x
        cur = nxt

    # (2) middle-level cores
    axes = (list(range(d, 2 * d)), list(range(d)))
    G = {(t, s): np.tensordot(bf.cores[(t, s)], cur[(t, s)], axes=axes) for t in tgt for s in src}
    del cur

    # (3) target-side transfers, accumulating children into parents
    for l in range(Ls, 0, -1):
        nxt = {}
        ntau = 1 << (Ls - l)
        for (t, nu), x in G.items():
            for k in range(d):
                x = block_mode_product(x, k, [bf.row_mats[(l, t, nu, k, tau)] for tau in range(ntau)])
            key = (t, tuple(v >> 1 for v in nu))
            if key in nxt:
                nxt[key] += x
            else:
                nxt[key] = x
        G = nxt

    out = np.zeros(bf.row_shape + (F.shape[d],), dtype=np.result_type(F, DTYPE))
    for t in tgt:
        x = G[(t, root)]
        for k in range(d):
            x = block_mode_product(x, k, [bf.row_mats[(0, t, root, k, tau)] for tau in range(1 << Ls)])
        out[_slices(rt, Lt, t)] = x
    return out[..., 0] if single else out


def tbf_memory(bf: TensorButterfly) -> MemoryReport:
    """Exact logical storage of factors and cores (complex128 scalars).

    Skeleton index lists are construction metadata and not counted. Cores
    are the part a floating-point compressor would shrink.
    """
    counts = {"V": 0, "W": 0, "U": 0, "P": 0, "cores": 0}
    for key, m in bf.col_mats.items():
        counts["V" if key[0] == 0 else "W"] += m.size
    for key, m in bf.row_mats.items():
        counts["U" if key[0] == 0 else "P"] += m.size
    counts["cores"] = sum(c.size for c in bf.cores.values())
    breakdown = {k: int(v) * SCALAR_BYTES for k, v in counts.items()}
    return MemoryReport(sum(breakdown.values()), breakdown)


def sample_delta_input(shape, n_samples: int, seed: int = 0):
    """A single-column input with ones at ``n_samples`` distinct random entries."""
    total = int(np.prod(shape))
    rng = np.random.default_rng(seed)
    flat = np.sort(rng.choice(total, size=min(n_samples, total), replace=False))
    F = np.zeros(total, dtype=DTYPE)
    F[flat] = 1.0
    return F.reshape(tuple(shape), order="F"), flat


def exact_columns_sum(kernel, flat_cols: np.ndarray) -> np.ndarray:
    """Sum of the kernel columns at the given flattened source indices."""
    cols = np.unravel_index(flat_cols, kernel.col_shape, order="F")
    acc = np.zeros(kernel.row_shape, dtype=DTYPE)
    grids = np.meshgrid(*[np.arange(m) for m in kernel.row_shape], indexing="ij", sparse=True)
    for c in range(len(flat_cols)):
        acc += kernel.evaluate(grids, [np.asarray(ck[c]) for ck in cols])
    return acc


def tbf_error_estimate(bf: TensorButterfly, kernel, n_samples: int = 10, seed: int = 0) -> float:
    """Relative error of the factorization on a sparse 0/1 input.

    The exact result is the sum of ``n_samples`` kernel columns, so the
    operator is never formed.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    Fe, flat = sample_delta_input(bf.col_shape, n_samples, seed)
    exact = exact_columns_sum(kernel, flat)
    approx = tbf_contract(bf, Fe)
    return float(np.linalg.norm(exact - approx) / np.linalg.norm(exact))
