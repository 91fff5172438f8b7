"""Dense tensor substrate: multi-index bookkeeping, unfoldings, mode products.

Linearization convention (used everywhere in the package): the first mode
varies fastest, i.e. Fortran order. A tensor of shape ``(n1, ..., nd)`` is
flattened so that ``(i1, ..., id)`` (0-based) maps to
``i1 + n1*i2 + n1*n2*i3 + ...``.

Public functions that take mode numbers or multi-indices use 1-based values
to match the usual mathematical notation; everything below the API works
0-based. :func:`_zero_based_mode` is the single conversion point for modes,
:meth:`MultiIndex.offsets` and :meth:`MultiSet.slices` for indices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

DTYPE = np.complex128


def _zero_based_mode(mode: int, ndim: int) -> int:
    if not isinstance(mode, (int, np.integer)) or not 1 <= mode <= ndim:
        raise ValueError(f"mode must be an integer in [1, {ndim}], got {mode!r}")
    return int(mode) - 1


@dataclass(frozen=True)
class MultiIndex:
    """A tuple of 1-based indices, one per mode."""

    entries: tuple[int, ...]
    extents: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(int(e) for e in self.entries))
        object.__setattr__(self, "extents", tuple(int(e) for e in self.extents))
        if len(self.entries) < 1 or len(self.entries) != len(self.extents):
            raise ValueError("multi-index length must equal the mode count (>= 1)")
        for e, n in zip(self.entries, self.extents):
            if not 1 <= e <= n:
                raise ValueError(f"index {e} outside mode extent {n}")

    @property
    def d(self) -> int:
        return len(self.entries)

    def offsets(self) -> tuple[int, ...]:
        return tuple(e - 1 for e in self.entries)


@dataclass(frozen=True)
class MultiSet:
    """A tuple of contiguous 1-based index ranges, one per mode.

    ``ranges[k]`` is a :class:`range` holding 1-based indices, e.g.
    ``range(1, n + 1)`` for a full mode.
    """

    ranges: tuple[range, ...]
    extents: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ranges", tuple(self.ranges))
        object.__setattr__(self, "extents", tuple(int(e) for e in self.extents))
        if len(self.ranges) < 1 or len(self.ranges) != len(self.extents):
            raise ValueError("multi-set length must equal the mode count (>= 1)")
        for r, n in zip(self.ranges, self.extents):
            if not isinstance(r, range) or r.step != 1 or len(r) == 0:
                raise ValueError(f"each set must be a nonempty contiguous range, got {r!r}")
            if r.start < 1 or r.stop - 1 > n:
                raise ValueError(f"range {r!r} outside mode extent {n}")

    @classmethod
    def full(cls, extents: Sequence[int]) -> "MultiSet":
        return cls(tuple(range(1, n + 1) for n in extents), tuple(extents))

    @property
    def d(self) -> int:
        return len(self.ranges)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(r) for r in self.ranges)

    def replace(self, k: int, new: range) -> "MultiSet":
        """Return the multi-set with mode ``k`` (1-based) replaced by ``new``."""
        k0 = _zero_based_mode(k, self.d)
        ranges = list(self.ranges)
        ranges[k0] = new
        return MultiSet(tuple(ranges), self.extents)

    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(r.start - 1, r.stop - 1) for r in self.ranges)


def as_tensor(data) -> np.ndarray:
    """Copy ``data`` into an immutable complex128 array."""
    t = np.array(data, dtype=DTYPE)
    t.setflags(write=False)
    return t


def flatten(t: np.ndarray) -> np.ndarray:
    return np.asarray(t).ravel(order="F")


def unflatten(data: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    data = np.asarray(data)
    if data.size != int(np.prod(shape)):
        raise ValueError(f"data length {data.size} does not match shape {tuple(shape)}")
    return data.reshape(tuple(shape), order="F")


@dataclass(frozen=True)
class Unfolding:
    source_shape: tuple[int, ...]
    mode: int
    matrix: np.ndarray


def unfold(t: np.ndarray, mode: int) -> Unfolding:
    """Mode-``mode`` unfolding: a ``(prod of other extents) x n_mode`` matrix.

    Row ``r`` is the Fortran-order flattening of the remaining indices, so
    entry ``(r, i)`` equals ``t`` at the multi-index with ``i`` in position
    ``mode`` and the other indices unflattened from ``r``.
    """
    t = np.asarray(t)
    j = _zero_based_mode(mode, t.ndim)
    n_j = t.shape[j]
    mat = np.moveaxis(t, j, -1).reshape(-1, n_j, order="F").copy()
    return Unfolding(tuple(t.shape), int(mode), mat)


def refold(u: Unfolding) -> np.ndarray:
    shape = u.source_shape
    j = _zero_based_mode(u.mode, len(shape))
    moved = tuple(n for k, n in enumerate(shape) if k != j) + (shape[j],)
    return np.moveaxis(u.matrix.reshape(moved, order="F"), -1, j)


def mode_product(t: np.ndarray, mode: int, m: np.ndarray) -> np.ndarray:
    """``t x_mode m``: contract mode ``mode`` of ``t`` with the columns of ``m``.

    The result replaces extent ``n_mode`` by ``m.shape[0]``; in unfolded form
    ``Y^(mode) = T^(mode) @ m.T``.
    """
    t = np.asarray(t)
    m = np.asarray(m)
    j = _zero_based_mode(mode, t.ndim)
    if m.ndim != 2 or m.shape[1] != t.shape[j]:
        raise ValueError(
            f"matrix of shape {m.shape} incompatible with extent {t.shape[j]} of mode {mode}"
        )
    return _mode_product0(t, j, m)


def _mode_product0(t: np.ndarray, axis: int, m: np.ndarray) -> np.ndarray:
    out = np.tensordot(m, t, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def block_mode_product(t: np.ndarray, axis: int, blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Mode product with ``diag(blocks)`` along 0-based ``axis``.

    Block ``b`` consumes the next ``blocks[b].shape[1]`` entries of the axis
    and produces ``blocks[b].shape[0]`` entries, in order.
    """
    x = np.moveaxis(t, axis, 0)
    if sum(b.shape[1] for b in blocks) != x.shape[0]:
        raise ValueError("block column counts do not add up to the axis extent")
    rest = x.shape[1:]
    x2 = x.reshape(x.shape[0], -1)
    out = np.empty((sum(b.shape[0] for b in blocks), x2.shape[1]), dtype=np.result_type(x2, *blocks))
    i = o = 0
    for b in blocks:
        out[o : o + b.shape[0]] = b @ x2[i : i + b.shape[1]]
        i += b.shape[1]
        o += b.shape[0]
    return np.moveaxis(out.reshape((out.shape[0],) + rest), 0, axis)


def matricize(t: np.ndarray, row_modes, col_modes) -> np.ndarray:
    """Reshape ``t`` into a matrix whose rows run over ``row_modes`` (1-based).

    Row and column indices are Fortran-order flattenings of the respective
    mode groups, taken in the order given.
    """
    t = np.asarray(t)
    rows = [_zero_based_mode(m, t.ndim) for m in row_modes]
    cols = [_zero_based_mode(m, t.ndim) for m in col_modes]
    if len(set(rows) | set(cols)) != t.ndim or set(rows) & set(cols):
        raise ValueError("row and column modes must partition all modes")
    if len(set(rows)) != len(rows) or len(set(cols)) != len(cols):
        raise ValueError("repeated mode in matricization")
    perm = rows + cols
    nr = int(np.prod([t.shape[k] for k in rows]))
    return np.transpose(t, perm).reshape(nr, -1, order="F")


def subtensor(kernel, rows: MultiSet, cols: MultiSet) -> np.ndarray:
    """Materialize ``K(rows, cols)`` as a ``2d``-mode array.

    Only the requested entries are evaluated.
    """
    if rows.d != kernel.d or cols.d != kernel.d:
        raise ValueError("multi-set mode count does not match the kernel")
    for r, n in zip(rows.ranges, kernel.row_shape):
        if r.stop - 1 > n:
            raise ValueError("row range outside the operator extent")
    for r, n in zip(cols.ranges, kernel.col_shape):
        if r.stop - 1 > n:
            raise ValueError("column range outside the operator extent")
    row_idx = [np.arange(r.start - 1, r.stop - 1) for r in rows.ranges]
    col_idx = [np.arange(r.start - 1, r.stop - 1) for r in cols.ranges]
    return eval_grid(kernel, row_idx, col_idx)


def eval_grid(kernel, row_idx: Sequence[np.ndarray], col_idx: Sequence[np.ndarray]) -> np.ndarray:
    """Evaluate the kernel on the tensor grid of 0-based index lists."""
    d = kernel.d
    lists = list(row_idx) + list(col_idx)
    grids = np.meshgrid(*lists, indexing="ij", sparse=True)
    return kernel.evaluate(grids[:d], grids[d:])


@dataclass(frozen=True)
class DyadicTree:
    """L-level binary partition of ``[0, extent)`` into equal contiguous nodes."""

    extent: int
    levels: int

    def __post_init__(self):
        if self.levels < 0:
            raise ValueError("levels must be nonnegative")
        if self.extent < 1 or self.extent % (1 << self.levels):
            raise ValueError(
                f"extent {self.extent} is not an integer multiple of 2^{self.levels}"
            )

    @property
    def leaf_size(self) -> int:
        return self.extent >> self.levels

    def width(self, level: int) -> int:
        return self.extent >> level

    def node(self, level: int, pos: int) -> range:
        """0-based index range of node ``pos`` at ``level``."""
        if not 0 <= level <= self.levels or not 0 <= pos < (1 << level):
            raise ValueError(f"no node ({level}, {pos})")
        w = self.width(level)
        return range(pos * w, (pos + 1) * w)

    def children(self, level: int, pos: int) -> tuple[range, range]:
        return self.node(level + 1, 2 * pos), self.node(level + 1, 2 * pos + 1)
