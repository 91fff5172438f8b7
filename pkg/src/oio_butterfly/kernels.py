"""Entry-evaluable oscillatory kernels.

Every kernel is an immutable object exposing ``d``, ``row_shape``,
``col_shape`` and a vectorized ``evaluate(rows, cols)`` taking ``d`` 0-based
integer arrays per side (broadcast against each other). Calling a kernel
with two 1-based index tuples returns one entry.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .tensor_core import DTYPE, MultiIndex, eval_grid, matricize

DENSE_CAP = 2**26

TWO_PI = 2.0 * math.pi


class KernelEvaluator:
    name = "kernel"

    def __init__(self, row_shape: Sequence[int], col_shape: Sequence[int]):
        self.row_shape = tuple(int(n) for n in row_shape)
        self.col_shape = tuple(int(n) for n in col_shape)
        if len(self.row_shape) != len(self.col_shape) or not self.row_shape:
            raise ValueError("row and column shapes must have the same nonzero length")
        self.d = len(self.row_shape)

    def evaluate(self, rows, cols) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, i, j) -> complex:
        i = MultiIndex(tuple(i), self.row_shape)
        j = MultiIndex(tuple(j), self.col_shape)
        rows = [np.asarray(e) for e in i.offsets()]
        cols = [np.asarray(e) for e in j.offsets()]
        return complex(self.evaluate(rows, cols))

    @property
    def params(self) -> dict:
        return {}

    def __repr__(self):
        extra = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}(shape={self.row_shape}x{self.col_shape}{', ' if extra else ''}{extra})"


def _check_n(n: int) -> int:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    return int(n)


def _wavenumber(n: int, ppw: float) -> float:
    if ppw <= 0:
        raise ValueError("points per wavelength must be positive")
    return TWO_PI * n / ppw


class _Helmholtz(KernelEvaluator):
    """exp(-i w rho) / rho on a uniform grid with ``x = i/n``, ``y = j/n + shift``."""

    def __init__(self, n: int, d: int, shift: Sequence[float], ppw: float = 4.0, omega: float | None = None):
        n = _check_n(n)
        super().__init__((n,) * d, (n,) * d)
        self.n = n
        self.ppw = float(ppw)
        self.omega = float(omega) if omega is not None else _wavenumber(n, ppw)
        if self.omega <= 0:
            raise ValueError("wave number must be positive")
        self.shift = tuple(float(s) for s in shift)

    @property
    def params(self):
        return {"n": self.n, "ppw": self.ppw, "omega": self.omega}

    def _coords(self, rows, cols):
        # x = (i1/n, ..., 0), y = (j1/n, ..., 0) + shift with 1-based i, j
        n = self.n
        sq = 0.0
        for k in range(len(self.shift)):
            xk = (rows[k] + 1) / n if k < self.d else 0.0
            yk = ((cols[k] + 1) / n if k < self.d else 0.0) + self.shift[k]
            sq = sq + (xk - yk) ** 2
        return np.sqrt(sq)

    def evaluate(self, rows, cols):
        rho = self._coords(rows, cols)
        return np.exp(-1j * self.omega * rho) / rho


class GreenPlatesKernel(_Helmholtz):
    """Two parallel unit plates at distance 1."""

    name = "green-plates"

    def __init__(self, n: int, ppw: float = 4.0, omega: float | None = None):
        super().__init__(n, 2, (0.0, 0.0, 1.0), ppw, omega)


class GreenCubesKernel(_Helmholtz):
    """Two unit cubes whose centers are 2 apart along the third axis."""

    name = "green-cubes"

    def __init__(self, n: int, ppw: float = 4.0, omega: float | None = None):
        super().__init__(n, 3, (0.0, 0.0, 2.0), ppw, omega)


class Radon2DKernel(KernelEvaluator):
    """exp(2 pi i phi) with phi = x.y + sqrt(c1^2 y1^2 + c2^2 y2^2).

    Uses 0-based offsets: ``x = i/n``, ``y = j - n/2``.
    """

    name = "radon-2d"

    def __init__(self, n: int):
        n = _check_n(n)
        super().__init__((n, n), (n, n))
        self.n = n

    @property
    def params(self):
        return {"n": self.n}

    def phase(self, rows, cols):
        n = self.n
        x1, x2 = rows[0] / n, rows[1] / n
        y1, y2 = cols[0] - n / 2, cols[1] - n / 2
        c1 = (2.0 + np.sin(TWO_PI * x1) * np.sin(TWO_PI * x2)) / 16.0
        c2 = (2.0 + np.cos(TWO_PI * x1) * np.cos(TWO_PI * x2)) / 16.0
        return x1 * y1 + x2 * y2 + np.sqrt(c1**2 * y1**2 + c2**2 * y2**2)

    def evaluate(self, rows, cols):
        return np.exp(1j * TWO_PI * self.phase(rows, cols))


class Radon3DKernel(KernelEvaluator):
    """exp(2 pi i phi) with phi = x.y + c|y|, c = (3 + sin sin sin)/100."""

    name = "radon-3d"

    def __init__(self, n: int):
        n = _check_n(n)
        super().__init__((n,) * 3, (n,) * 3)
        self.n = n

    @property
    def params(self):
        return {"n": self.n}

    def phase(self, rows, cols):
        n = self.n
        x = [r / n for r in rows]
        y = [c - n / 2 for c in cols]
        c = (3.0 + np.sin(TWO_PI * x[0]) * np.sin(TWO_PI * x[1]) * np.sin(TWO_PI * x[2])) / 100.0
        dot = x[0] * y[0] + x[1] * y[1] + x[2] * y[2]
        return dot + c * np.sqrt(y[0] ** 2 + y[1] ** 2 + y[2] ** 2)

    def evaluate(self, rows, cols):
        return np.exp(1j * TWO_PI * self.phase(rows, cols))


class DFTKernel(KernelEvaluator):
    """Uniform d-dimensional DFT, exp(2 pi i sum_k i_k j_k / n), 0-based i, j."""

    name = "dft"

    def __init__(self, n: int, d: int = 1):
        n = _check_n(n)
        if d < 1:
            raise ValueError("d must be >= 1")
        super().__init__((n,) * d, (n,) * d)
        self.n = n

    @property
    def params(self):
        return {"n": self.n, "d": self.d}

    def evaluate(self, rows, cols):
        # integer reduction keeps the phase exact for any n
        acc = 0
        for r, c in zip(rows, cols):
            acc = acc + np.asarray(r, dtype=np.int64) * np.asarray(c, dtype=np.int64)
        m = np.mod(acc, self.n)
        return np.exp(1j * TWO_PI * (m / self.n))


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def splitmix64(x: np.ndarray) -> np.ndarray:
    """Vectorized SplitMix64 finalizer over uint64 counters."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def hashed_uniform(seed: int, counter: np.ndarray) -> np.ndarray:
    """Counter-based uniform samples in [0, 1), reproducible without storage."""
    key = splitmix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0]
    with np.errstate(over="ignore"):
        z = splitmix64(np.asarray(counter, dtype=np.uint64) ^ key)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


class NUDFTKernel(KernelEvaluator):
    """Type-2 non-uniform DFT: random targets x in [0, n-1]^d, y = j/n."""

    name = "nudft"

    def __init__(self, n: int, d: int = 2, seed: int = 0):
        n = _check_n(n)
        if d < 1:
            raise ValueError("d must be >= 1")
        super().__init__((n,) * d, (n,) * d)
        self.n = n
        self.seed = int(seed)

    @property
    def params(self):
        return {"n": self.n, "d": self.d, "seed": self.seed}

    def locations(self, rows) -> list[np.ndarray]:
        n, d = self.n, self.d
        flat = np.zeros((), dtype=np.int64)
        stride = 1
        for r in rows:
            flat = flat + np.asarray(r, dtype=np.int64) * stride
            stride *= n
        return [hashed_uniform(self.seed, flat * d + k) * (n - 1) for k in range(d)]

    def evaluate(self, rows, cols):
        x = self.locations(rows)
        phase = 0.0
        for xk, c in zip(x, cols):
            phase = phase + xk * (np.asarray(c) / self.n)
        return np.exp(1j * TWO_PI * phase)


def bit_reversal_permutation(n: int) -> np.ndarray:
    """0-based bit-reversal map of ``range(n)``; ``n`` must be a power of two."""
    if n < 1 or n & (n - 1):
        raise ValueError(f"bit reversal needs a power-of-two extent, got {n}")
    bits = n.bit_length() - 1
    idx = np.arange(n)
    out = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        out |= ((idx >> b) & 1) << (bits - 1 - b)
    return out


class BitReversedKernel(KernelEvaluator):
    """Kernel with bit-reversed index order along every mode of the chosen sides."""

    def __init__(self, base: KernelEvaluator, sides: str = "both"):
        if sides not in ("source", "target", "both"):
            raise ValueError("sides must be 'source', 'target' or 'both'")
        super().__init__(base.row_shape, base.col_shape)
        self.base = base
        self.sides = sides
        self.name = base.name
        ident = [None] * base.d
        self._row_maps = [bit_reversal_permutation(n) for n in base.row_shape] if sides != "source" else ident
        self._col_maps = [bit_reversal_permutation(n) for n in base.col_shape] if sides != "target" else ident

    @property
    def params(self):
        return {**self.base.params, "bitrev": self.sides}

    def evaluate(self, rows, cols):
        rows = [r if m is None else m[r] for r, m in zip(rows, self._row_maps)]
        cols = [c if m is None else m[c] for c, m in zip(cols, self._col_maps)]
        return self.base.evaluate(rows, cols)


def reorder_bit_reversal(kernel: KernelEvaluator, sides: str = "both") -> KernelEvaluator:
    """Wrap ``kernel`` with per-mode bit-reversed index maps.

    Applying the wrapper to an already wrapped kernel with the same sides
    undoes it (bit reversal is an involution).
    """
    if isinstance(kernel, BitReversedKernel) and kernel.sides == sides:
        return kernel.base
    return BitReversedKernel(kernel, sides)


_FIXED_D = {"green-plates": 2, "green-cubes": 3, "radon-2d": 2, "radon-3d": 3}
KERNEL_NAMES = ("green-plates", "green-cubes", "radon-2d", "radon-3d", "dft", "nudft")


def make_kernel(name: str, n: int, d: int | None = None, *, ppw: float = 4.0,
                seed: int = 0, bitrev: str | None = None) -> KernelEvaluator:
    """Build a catalog kernel by name."""
    if name not in KERNEL_NAMES:
        raise ValueError(f"unknown kernel {name!r}; expected one of {', '.join(KERNEL_NAMES)}")
    if name in _FIXED_D:
        if d is not None and d != _FIXED_D[name]:
            raise ValueError(f"kernel {name} is {_FIXED_D[name]}-dimensional, got d={d}")
    if name == "green-plates":
        k = GreenPlatesKernel(n, ppw=ppw)
    elif name == "green-cubes":
        k = GreenCubesKernel(n, ppw=ppw)
    elif name == "radon-2d":
        k = Radon2DKernel(n)
    elif name == "radon-3d":
        k = Radon3DKernel(n)
    elif name == "dft":
        k = DFTKernel(n, 1 if d is None else d)
    else:
        k = NUDFTKernel(n, 2 if d is None else d, seed=seed)
    if bitrev:
        k = reorder_bit_reversal(k, bitrev)
    return k


def _entry_count(kernel) -> int:
    return int(np.prod(kernel.row_shape)) * int(np.prod(kernel.col_shape))


def dense_oracle(kernel: KernelEvaluator, cap: int = DENSE_CAP) -> np.ndarray:
    """Fully materialized matricization (rows: modes 1..d, cols: d+1..2d)."""
    if _entry_count(kernel) > cap:
        raise ValueError(
            f"dense oracle refused: {_entry_count(kernel)} entries exceed the cap of {cap}"
        )
    d = kernel.d
    t = eval_grid(kernel, [np.arange(n) for n in kernel.row_shape], [np.arange(n) for n in kernel.col_shape])
    return matricize(t, range(1, d + 1), range(d + 1, 2 * d + 1))


def dense_contract(kernel: KernelEvaluator, F: np.ndarray, cap: int = DENSE_CAP,
                   chunk_rows: int = 256) -> np.ndarray:
    """Brute-force ``K x_{d+1..2d} F`` by streaming row blocks of the matricization.

    ``F`` has shape ``col_shape + (n_v,)``; the result has ``row_shape + (n_v,)``.
    """
    if _entry_count(kernel) > cap:
        raise ValueError(
            f"dense oracle refused: {_entry_count(kernel)} entries exceed the cap of {cap}"
        )
    d = kernel.d
    F = np.asarray(F)
    if F.shape[:d] != kernel.col_shape:
        raise ValueError("input tensor does not match the operator's column extents")
    nv = F.shape[d] if F.ndim == d + 1 else 1
    Fm = F.reshape(-1, nv, order="F")
    m_tot = int(np.prod(kernel.row_shape))
    cols = np.unravel_index(np.arange(Fm.shape[0]), kernel.col_shape, order="F")
    out = np.empty((m_tot, nv), dtype=DTYPE)
    for start in range(0, m_tot, chunk_rows):
        rr = np.arange(start, min(start + chunk_rows, m_tot))
        rows = np.unravel_index(rr, kernel.row_shape, order="F")
        block = kernel.evaluate([r[:, None] for r in rows], [c[None, :] for c in cols])
        out[rr] = block @ Fm
    return out.reshape(kernel.row_shape + (nv,), order="F")
