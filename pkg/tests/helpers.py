"""Shared test helpers."""

import numpy as np

from oio_butterfly.kernels import KernelEvaluator

ACCEPTANCE_LINES: list[str] = []


def report(criterion: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    print(ACCEPTANCE_LINES[-1])


class ArrayKernel(KernelEvaluator):
    """Kernel backed by an explicit 2d-mode array (for tests)."""

    name = "array"

    def __init__(self, data):
        data = np.asarray(data, dtype=complex)
        d = data.ndim // 2
        super().__init__(data.shape[:d], data.shape[d:])
        self.data = data

    def evaluate(self, rows, cols):
        return self.data[tuple(np.asarray(r) for r in rows) + tuple(np.asarray(c) for c in cols)]


class SeparableKernel(KernelEvaluator):
    """prod_k a_k(i_k) b_k(j_k): every unfolding has rank 1."""

    name = "separable"

    def __init__(self, n, d, seed=0):
        super().__init__((n,) * d, (n,) * d)
        rng = np.random.default_rng(seed)
        self.a = [rng.uniform(1, 2, n) for _ in range(d)]
        self.b = [rng.uniform(1, 2, n) for _ in range(d)]

    def evaluate(self, rows, cols):
        out = 1.0 + 0j
        for a, b, r, c in zip(self.a, self.b, rows, cols):
            out = out * a[np.asarray(r)] * b[np.asarray(c)]
        return out


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def rel(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))
