"""Binary storage for :class:`TensorButterfly`.

Layout (all little-endian)::

    b"TBF1"
    u32 d, u32 L, u64 extents[2d] (row extents then column extents)
    f64 tol, i64 seed, u64 saturated
    proxy strategy: u32 len + utf-8 mode, f64 q, u32 retries, u32 rank_init
    u64 rank count, i64 ranks[...]
    four factor sections (col_mats, col_skel, row_mats, row_skel), then cores;
    each section: u64 count, then per block in sorted key order
        key:   u32 len + i64 flattened key
        array: u8 kind (0 = int64, 1 = complex128), u32 ndim, u64 shape[ndim], raw data (C order)

Nested key tuples are flattened with their structure recorded as lengths so
they can be rebuilt exactly.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .id_compress import ProxyStrategy
from .tensor_butterfly import TensorButterfly

MAGIC = b"TBF1"
_SECTIONS = ("col_mats", "col_skel", "row_mats", "row_skel", "cores")
_KINDS = {0: np.dtype("<i8"), 1: np.dtype("<c16")}


def _flatten_key(key) -> list[int]:
    # each element: -1 marks a scalar; n >= 0 marks a tuple of n scalars
    out = []
    for part in key:
        if isinstance(part, tuple):
            out.append(len(part))
            out.extend(int(v) for v in part)
        else:
            out.extend((-1, int(part)))
    return out


def _unflatten_key(flat: list[int]) -> tuple:
    parts, i = [], 0
    while i < len(flat):
        tag = flat[i]
        if tag == -1:
            parts.append(flat[i + 1])
            i += 2
        else:
            parts.append(tuple(flat[i + 1 : i + 1 + tag]))
            i += 1 + tag
    return tuple(parts)


def _write_array(buf, a: np.ndarray) -> None:
    a = np.asarray(a)
    kind = 0 if np.issubdtype(a.dtype, np.integer) else 1
    data = np.ascontiguousarray(a, dtype=_KINDS[kind])
    buf.write(struct.pack("<BI", kind, data.ndim))
    buf.write(struct.pack(f"<{data.ndim}Q", *data.shape))
    buf.write(data.tobytes())


def _read(buf, fmt):
    size = struct.calcsize(fmt)
    raw = buf.read(size)
    if len(raw) != size:
        raise ValueError("truncated tensor butterfly file")
    return struct.unpack(fmt, raw)


def _read_array(buf) -> np.ndarray:
    kind, ndim = _read(buf, "<BI")
    if kind not in _KINDS:
        raise ValueError(f"unknown block kind {kind}")
    shape = _read(buf, f"<{ndim}Q")
    dt = _KINDS[kind]
    count = int(np.prod(shape)) if ndim else 1
    raw = buf.read(count * dt.itemsize)
    if len(raw) != count * dt.itemsize:
        raise ValueError("truncated tensor butterfly file")
    a = np.frombuffer(raw, dtype=dt).reshape(shape)
    return a.astype(np.int64 if kind == 0 else np.complex128)


def dumps(bf: TensorButterfly) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", bf.d, bf.L))
    buf.write(struct.pack(f"<{2 * bf.d}Q", *bf.row_shape, *bf.col_shape))
    buf.write(struct.pack("<dqQ", bf.tol, bf.seed, bf.saturated))
    mode = bf.strategy.mode.encode()
    buf.write(struct.pack("<I", len(mode)) + mode)
    buf.write(struct.pack("<dII", bf.strategy.q, bf.strategy.retries, bf.strategy.rank_init))
    buf.write(struct.pack("<Q", len(bf.ranks)))
    buf.write(struct.pack(f"<{len(bf.ranks)}q", *bf.ranks))
    for name in _SECTIONS:
        blocks = getattr(bf, name)
        buf.write(struct.pack("<Q", len(blocks)))
        for key in sorted(blocks):
            flat = _flatten_key(key)
            buf.write(struct.pack(f"<I{len(flat)}q", len(flat), *flat))
            _write_array(buf, blocks[key])
    return buf.getvalue()


def loads(data: bytes) -> TensorButterfly:
    buf = io.BytesIO(data)
    if buf.read(4) != MAGIC:
        raise ValueError("not a tensor butterfly file (bad magic)")
    d, L = _read(buf, "<II")
    ext = _read(buf, f"<{2 * d}Q")
    tol, seed, saturated = _read(buf, "<dqQ")
    (mlen,) = _read(buf, "<I")
    mode = buf.read(mlen).decode()
    q, retries, rank_init = _read(buf, "<dII")
    (nr,) = _read(buf, "<Q")
    ranks = list(_read(buf, f"<{nr}q"))
    bf = TensorButterfly(d, tuple(ext[:d]), tuple(ext[d:]), L, tol, seed,
                         ProxyStrategy(mode, q, retries, rank_init), ranks=ranks, saturated=saturated)
    for name in _SECTIONS:
        (count,) = _read(buf, "<Q")
        blocks = getattr(bf, name)
        for _ in range(count):
            (klen,) = _read(buf, "<I")
            key = _unflatten_key(list(_read(buf, f"<{klen}q")))
            blocks[key] = _read_array(buf)
    if buf.read(1):
        raise ValueError("trailing bytes after tensor butterfly data")
    return bf


def save(bf: TensorButterfly, path) -> None:
    Path(path).write_bytes(dumps(bf))


def load(path) -> TensorButterfly:
    return loads(Path(path).read_bytes())


def identical(a: TensorButterfly, b: TensorButterfly) -> bool:
    """Bitwise equality of all metadata and stored blocks."""
    head = ("d", "L", "row_shape", "col_shape", "seed", "strategy", "ranks", "saturated")
    if any(getattr(a, h) != getattr(b, h) for h in head):
        return False
    if struct.pack("<d", a.tol) != struct.pack("<d", b.tol):
        return False
    for name in _SECTIONS:
        x, y = getattr(a, name), getattr(b, name)
        if x.keys() != y.keys():
            return False
        for k in x:
            u, v = np.asarray(x[k]), np.asarray(y[k])
            if u.shape != v.shape or u.dtype != v.dtype or u.tobytes() != v.tobytes():
                return False
    return True
