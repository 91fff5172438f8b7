"""L-level matrix butterfly (baseline).

Works on a plain ``m x n`` entry function. Multi-dimensional kernels are
flattened with a bit-interleaved (Morton) ordering so that every dyadic block
of the flattened index is a spatial box; see :class:`MatrixKernel`.

Middle levels are ``Lt = L // 2`` for the row tree and ``Ls = L - Lt`` for
the column tree. Factor keys:

* ``V``/``W`` at ``(l, s, tau, nu)``: ``s`` a column node at level ``Ls``,
  ``tau`` a row node at level ``l`` and ``nu`` a node of the subtree of ``s``
  at relative depth ``Lt - l``. ``l == 0`` is a leaf ``V``, above it ``W``.
* ``U``/``P`` at ``(l, t, nu, tau)``, mirrored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .id_compress import ProxyStrategy, column_id, hybrid_id, proxy_rng, proxy_rows
from .kernels import KernelEvaluator
from .tensor_core import DTYPE, DyadicTree

SCALAR_BYTES = np.dtype(DTYPE).itemsize
DEFAULT_LEAF = 16


class MatrixKernel:
    """``m x n`` entry function ``entries(i, j)`` on broadcast 0-based arrays.

    ``row_order[f]`` / ``col_order[f]`` give the Fortran-flattened tensor
    index at butterfly position ``f`` (identity for plain matrices).
    """

    def __init__(self, entries, m: int, n: int, row_order=None, col_order=None):
        self.entries = entries
        self.m, self.n = int(m), int(n)
        self.row_order = np.arange(self.m) if row_order is None else np.asarray(row_order)
        self.col_order = np.arange(self.n) if col_order is None else np.asarray(col_order)

    def block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return self.entries(np.asarray(rows)[:, None], np.asarray(cols)[None, :])

    def dense(self) -> np.ndarray:
        return self.block(np.arange(self.m), np.arange(self.n))


def morton_order(shape) -> np.ndarray:
    """Fortran-flat tensor index at each position of the bit-interleaved order.

    With ``p`` bits per mode, position bits are read from the most
    significant end and dealt to modes ``0, 1, ..., d-1`` in turn.
    """
    shape = tuple(int(s) for s in shape)
    d = len(shape)
    if d == 1:
        return np.arange(shape[0])
    n = shape[0]
    if any(s != n for s in shape) or n & (n - 1):
        raise ValueError("interleaved flattening needs equal power-of-two extents")
    p = n.bit_length() - 1
    f = np.arange(n**d, dtype=np.int64)
    coords = [np.zeros_like(f) for _ in range(d)]
    for q in range(d * p):
        bit = (f >> (d * p - 1 - q)) & 1
        k = q % d
        coords[k] |= bit << (p - 1 - q // d)
    return np.ravel_multi_index(coords, shape, order="F")


def flatten_kernel(kernel: KernelEvaluator) -> MatrixKernel:
    if kernel.d == 1:
        return MatrixKernel(lambda i, j: kernel.evaluate([i], [j]), kernel.row_shape[0], kernel.col_shape[0])
    ro = morton_order(kernel.row_shape)
    co = morton_order(kernel.col_shape)
    rsub = np.stack(np.unravel_index(ro, kernel.row_shape, order="F"))
    csub = np.stack(np.unravel_index(co, kernel.col_shape, order="F"))

    def entries(i, j):
        return kernel.evaluate([r[i] for r in rsub], [c[j] for c in csub])

    return MatrixKernel(entries, ro.size, co.size, ro, co)


def default_levels(n: int, leaf_size: int = DEFAULT_LEAF) -> int:
    L = 0
    while n % (1 << (L + 1)) == 0 and (n >> (L + 1)) >= leaf_size:
        L += 1
    return L


@dataclass
class MatrixButterfly:
    m: int
    n: int
    L: int
    tol: float
    V: dict = field(default_factory=dict)
    U: dict = field(default_factory=dict)
    col_skel: dict = field(default_factory=dict)
    row_skel: dict = field(default_factory=dict)
    cores: dict = field(default_factory=dict)
    ranks: list = field(default_factory=list)
    saturated: int = 0
    row_order: np.ndarray | None = None
    col_order: np.ndarray | None = None

    @property
    def Lt(self) -> int:
        return self.L // 2

    @property
    def Ls(self) -> int:
        return self.L - self.L // 2

    @property
    def r(self) -> int:
        return max(self.ranks) if self.ranks else 0

    @property
    def r_min(self) -> int:
        return min(self.ranks) if self.ranks else 0

    def memory_breakdown(self) -> dict:
        out = {"V": 0, "W": 0, "U": 0, "P": 0, "cores": 0}
        for (l, *_), M in self.V.items():
            out["V" if l == 0 else "W"] += M.size * SCALAR_BYTES
        for (l, *_), M in self.U.items():
            out["U" if l == 0 else "P"] += M.size * SCALAR_BYTES
        out["cores"] = sum(c.size for c in self.cores.values()) * SCALAR_BYTES
        return out

    def memory_bytes(self) -> int:
        return sum(self.memory_breakdown().values())


def _proxy_col_id(A: MatrixKernel, rows, cand, tol, strategy, rng, r_est, transpose=False):
    """Column ID of ``A[rows, cand]`` (or of ``A[cand, rows].T``) on proxy rows."""
    count = strategy.count(len(rows), r_est)
    for attempt in range(strategy.retries + 1):
        if count >= len(rows) or strategy.mode == "all":
            sel = rows
        else:
            sel = rows[proxy_rows((len(rows),), count, strategy.mode, rng)[0]]
        M = A.block(cand, sel).T if transpose else A.block(sel, cand)
        cid = column_id(M, tol)
        sat = len(sel) < len(rows) and strategy.q * cid.rank > len(sel)
        if not sat or attempt == strategy.retries:
            break
        count = min(len(rows), 2 * len(sel))
    return cand[cid.skeleton], cid.interp, cid.rank, bool(sat)


def _rng(tree, level, pos):
    r = tree.node(level, pos)
    return np.arange(r.start, r.stop, dtype=np.int64)


def mbf_construct(kernel, L: int | None = None, tol: float = 1e-6,
                  proxies: ProxyStrategy = ProxyStrategy(), seed: int = 0,
                  leaf_size: int | None = None) -> MatrixButterfly:
    """Butterfly factorization of a :class:`MatrixKernel` or a kernel object.

    ``L == 0`` is a single hybrid ID of the whole matrix.
    """
    A = kernel if isinstance(kernel, MatrixKernel) else flatten_kernel(kernel)
    m, n = A.m, A.n
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    if L is None:
        L = default_levels(min(m, n), DEFAULT_LEAF if leaf_size is None else leaf_size)
    rt, ct = DyadicTree(m, L), DyadicTree(n, L)
    bf = MatrixButterfly(m, n, L, tol, row_order=A.row_order, col_order=A.col_order)
    if L == 0:
        h = hybrid_id(A.dense(), tol)
        bf.V[(0, 0, 0, 0)] = h.col_interp
        bf.U[(0, 0, 0, 0)] = h.row_interp
        bf.col_skel[(0, 0, 0, 0)] = h.col_skeleton
        bf.row_skel[(0, 0, 0, 0)] = h.row_skeleton
        bf.cores[(0, 0)] = h.core
        bf.ranks = [len(h.col_skeleton), len(h.row_skeleton)]
        return bf

    Lt, Ls = bf.Lt, bf.Ls
    r_est = proxies.rank_init
    for l in range(Lt + 1):
        level = []
        for s in range(1 << Ls):
            for tau in range(1 << l):
                rows = _rng(rt, l, tau)
                for nu in range(1 << (Lt - l)):
                    if l == 0:
                        cand = _rng(ct, L, (s << Lt) + nu)
                    else:
                        cand = np.concatenate([bf.col_skel[(l - 1, s, tau >> 1, 2 * nu)],
                                               bf.col_skel[(l - 1, s, tau >> 1, 2 * nu + 1)]])
                    sk, X, r, sat = _proxy_col_id(A, rows, cand, tol, proxies,
                                                  proxy_rng(seed, 0, l, s, tau, 0, nu), r_est)
                    bf.col_skel[(l, s, tau, nu)] = sk
                    bf.V[(l, s, tau, nu)] = X
                    bf.saturated += sat
                    level.append(r)
        bf.ranks.extend(level)
        r_est = max(r_est, max(level))
    for l in range(Ls + 1):
        level = []
        for t in range(1 << Lt):
            for nu in range(1 << l):
                cols = _rng(ct, l, nu)
                for tau in range(1 << (Ls - l)):
                    if l == 0:
                        cand = _rng(rt, L, (t << Ls) + tau)
                    else:
                        cand = np.concatenate([bf.row_skel[(l - 1, t, nu >> 1, 2 * tau)],
                                               bf.row_skel[(l - 1, t, nu >> 1, 2 * tau + 1)]])
                    sk, X, r, sat = _proxy_col_id(A, cols, cand, tol, proxies,
                                                  proxy_rng(seed, 1, l, t, nu, 0, tau), r_est,
                                                  transpose=True)
                    bf.row_skel[(l, t, nu, tau)] = sk
                    bf.U[(l, t, nu, tau)] = X.T
                    bf.saturated += sat
                    level.append(r)
        bf.ranks.extend(level)
        r_est = max(r_est, max(level))
    for s in range(1 << Ls):
        for t in range(1 << Lt):
            bf.cores[(t, s)] = A.block(bf.row_skel[(Ls, t, s, 0)], bf.col_skel[(Lt, s, t, 0)])
    return bf


def _blockdiag_apply(blocks, x):
    out, i = [], 0
    for B in blocks:
        out.append(B @ x[i : i + B.shape[1]])
        i += B.shape[1]
    return np.concatenate(out, axis=0)


def mbf_apply(bf: MatrixButterfly, F: np.ndarray) -> np.ndarray:
    """``K @ F`` in the butterfly's own row/column ordering."""
    F = np.asarray(F)
    vec = F.ndim == 1
    if vec:
        F = F[:, None]
    if F.ndim != 2 or F.shape[0] != bf.n:
        raise ValueError(f"input with {F.shape[0] if F.ndim else 0} rows does not match n={bf.n}")
    if bf.L == 0:
        out = bf.U[(0, 0, 0, 0)] @ (bf.cores[(0, 0)] @ (bf.V[(0, 0, 0, 0)] @ F))
        return out[:, 0] if vec else out
    L, Lt, Ls = bf.L, bf.Lt, bf.Ls
    ct, rt = DyadicTree(bf.n, L), DyadicTree(bf.m, L)
    cur = {}
    for s in range(1 << Ls):
        cs = ct.node(Ls, s)
        cur[(0, s)] = _blockdiag_apply([bf.V[(0, s, 0, nu)] for nu in range(1 << Lt)], F[cs.start : cs.stop])
    for l in range(1, Lt + 1):
        cur = {(tau, s): _blockdiag_apply([bf.V[(l, s, tau, nu)] for nu in range(1 << (Lt - l))], cur[(tau >> 1, s)])
               for s in range(1 << Ls) for tau in range(1 << l)}
    G = {(t, s): bf.cores[(t, s)] @ cur[(t, s)] for t in range(1 << Lt) for s in range(1 << Ls)}
    for l in range(Ls, 0, -1):
        nxt = {}
        for (t, nu), x in G.items():
            y = _blockdiag_apply([bf.U[(l, t, nu, tau)] for tau in range(1 << (Ls - l))], x)
            key = (t, nu >> 1)
            nxt[key] = nxt[key] + y if key in nxt else y
        G = nxt
    out = np.zeros((bf.m, F.shape[1]), dtype=np.result_type(F, DTYPE))
    for t in range(1 << Lt):
        rs = rt.node(Lt, t)
        out[rs.start : rs.stop] = _blockdiag_apply([bf.U[(0, t, 0, tau)] for tau in range(1 << Ls)], G[(t, 0)])
    return out[:, 0] if vec else out


def mbf_apply_tensor(bf: MatrixButterfly, F: np.ndarray, row_shape, col_shape) -> np.ndarray:
    """Apply to a tensor input ``col_shape + (n_v,)``, returning ``row_shape + (n_v,)``."""
    F = np.asarray(F)
    nv = F.shape[-1] if F.ndim == len(col_shape) + 1 else 1
    Ff = F.reshape(-1, nv, order="F")[bf.col_order]
    y = mbf_apply(bf, Ff)
    out = np.empty_like(y)
    out[bf.row_order] = y
    return out.reshape(tuple(row_shape) + (nv,), order="F")


# -- assembled form (small instances only) ------------------------------------

@dataclass
class AssembledFactor:
    """Dense global factor with labelled row/column blocks.

    ``row_blocks[i] = (label, start, stop)``; labels identify the node pair a
    block belongs to, so tests can check which blocks must vanish.
    """

    name: str
    matrix: np.ndarray
    row_blocks: list
    col_blocks: list


def _layout(items):
    blocks, o = [], 0
    for label, size in items:
        blocks.append((label, o, o + size))
        o += size
    return blocks, o


def assemble_factors(bf: MatrixButterfly) -> list[AssembledFactor]:
    """Global block-sparse factors, rightmost first: ``K ~= F[-1] @ ... @ F[0]``."""
    if bf.L == 0:
        raise ValueError("assembly needs L >= 1")
    L, Lt, Ls = bf.L, bf.Lt, bf.Ls
    ct, rt = DyadicTree(bf.n, L), DyadicTree(bf.m, L)
    factors = []

    def col_level(l):
        return [((l, tau, s, nu), bf.V[(l, s, tau, nu)].shape[0])
                for tau in range(1 << l) for s in range(1 << Ls) for nu in range(1 << (Lt - l))]

    def row_level(l):
        return [((l, t, nu, tau), bf.U[(l, t, nu, tau)].shape[1])
                for t in range(1 << Lt) for nu in range(1 << l) for tau in range(1 << (Ls - l))]

    # V: input leaves -> level 0 skeleton vectors
    in_blocks = [(("in", j), *(lambda r: (r.start, r.stop))(ct.node(L, j))) for j in range(1 << L)]
    rb, size = _layout(col_level(0))
    M = np.zeros((size, bf.n), dtype=DTYPE)
    for (lab, a, b) in rb:
        _, _, s, nu = lab
        cs = ct.node(L, (s << Lt) + nu)
        M[a:b, cs.start : cs.stop] = bf.V[(0, s, 0, nu)]
    factors.append(AssembledFactor("V", M, rb, in_blocks))
    prev = rb
    for l in range(1, Lt + 1):
        rb, size = _layout(col_level(l))
        pos = {lab: (a, b) for lab, a, b in prev}
        M = np.zeros((size, prev[-1][2]), dtype=DTYPE)
        for (lab, a, b) in rb:
            _, tau, s, nu = lab
            c1 = pos[(l - 1, tau >> 1, s, 2 * nu)]
            c2 = pos[(l - 1, tau >> 1, s, 2 * nu + 1)]
            X = bf.V[(l, s, tau, nu)]
            w1 = c1[1] - c1[0]
            M[a:b, c1[0] : c1[1]] = X[:, :w1]
            M[a:b, c2[0] : c2[1]] = X[:, w1:]
        factors.append(AssembledFactor(f"W{l}", M, rb, prev))
        prev = rb
    # cores: (tau=t, s) blocks -> (t, nu=s) row-side blocks at level Ls
    rb, size = _layout(row_level(Ls))
    pos = {lab: (a, b) for lab, a, b in prev}
    M = np.zeros((size, prev[-1][2]), dtype=DTYPE)
    for (lab, a, b) in rb:
        _, t, s, _ = lab
        c = pos[(Lt, t, s, 0)]
        M[a:b, c[0] : c[1]] = bf.cores[(t, s)]
    factors.append(AssembledFactor("K", M, rb, prev))
    prev = rb
    for l in range(Ls, 0, -1):
        rb, size = _layout(row_level(l - 1))
        pos = {lab: (a, b) for lab, a, b in rb}
        M = np.zeros((size, prev[-1][2]), dtype=DTYPE)
        for (lab, a, b) in prev:
            _, t, nu, tau = lab
            X = bf.U[(l, t, nu, tau)]
            r1 = pos[(l - 1, t, nu >> 1, 2 * tau)]
            r2 = pos[(l - 1, t, nu >> 1, 2 * tau + 1)]
            h1 = r1[1] - r1[0]
            M[r1[0] : r1[1], a:b] = X[:h1]
            M[r2[0] : r2[1], a:b] = X[h1:]
        factors.append(AssembledFactor(f"P{l}", M, rb, prev))
        prev = rb
    out_blocks = [(("out", i), *(lambda r: (r.start, r.stop))(rt.node(L, i))) for i in range(1 << L)]
    M = np.zeros((bf.m, prev[-1][2]), dtype=DTYPE)
    for (lab, a, b) in prev:
        _, t, _, tau = lab
        rs = rt.node(L, (t << Ls) + tau)
        M[rs.start : rs.stop, a:b] = bf.U[(0, t, 0, tau)]
    factors.append(AssembledFactor("U", M, out_blocks, prev))
    return factors


def effective_interp(bf: MatrixButterfly, l: int, s: int, tau: int, nu: int):
    """Skeleton and interpolation of ``K(tau, nu_full)`` via the nested basis.

    ``nu_full`` is the full column range of node ``nu`` (at relative depth
    ``Lt - l`` below ``s``). Returns ``(skeleton, X)`` with
    ``K(rows, nu_full) ~= K(rows, skeleton) @ X``.
    """
    X = bf.V[(l, s, tau, nu)]
    if l == 0:
        return bf.col_skel[(l, s, tau, nu)], X
    _, X1 = effective_interp(bf, l - 1, s, tau >> 1, 2 * nu)
    _, X2 = effective_interp(bf, l - 1, s, tau >> 1, 2 * nu + 1)
    r1 = X1.shape[0]
    full = np.hstack([X[:, :r1] @ X1, X[:, r1:] @ X2])
    return bf.col_skel[(l, s, tau, nu)], full
