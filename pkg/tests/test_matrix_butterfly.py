import time

import numpy as np
import pytest

from oio_butterfly.id_compress import hybrid_id
from oio_butterfly.kernels import dense_oracle, make_kernel
from oio_butterfly.matrix_butterfly import (
    MatrixKernel,
    assemble_factors,
    effective_interp,
    flatten_kernel,
    mbf_apply,
    mbf_apply_tensor,
    mbf_construct,
    morton_order,
)
from oio_butterfly.tensor_butterfly import tbf_construct, tbf_memory
from oio_butterfly.tensor_core import DyadicTree

from .helpers import crandn, rel


@pytest.fixture(scope="module")
def dft64():
    k = make_kernel("dft", 64, 1)
    return k, mbf_construct(k, L=4, tol=1e-6, seed=3)


def test_level_zero_is_hybrid_id():
    k = make_kernel("green-plates", 8)
    A = flatten_kernel(k)
    bf = mbf_construct(A, L=0, tol=1e-6)
    h = hybrid_id(A.dense(), 1e-6)
    assert np.array_equal(bf.cores[(0, 0)], h.core)
    x = np.random.default_rng(0).standard_normal(64)
    assert np.allclose(mbf_apply(bf, x), h.reconstruct() @ x, rtol=1e-12, atol=0)


def test_dft_accuracy_and_rank(dft64, rng):
    k, bf = dft64
    F = crandn(rng, 64, 10)
    assert rel(mbf_apply(bf, F), dense_oracle(k) @ F) <= 1e-4
    assert bf.r <= 16


def test_green_plates_through_morton_order(rng):
    k = make_kernel("green-plates", 16)
    bf = mbf_construct(k, L=2, tol=1e-4, seed=1)
    F = crandn(rng, 16, 16, 3)
    exact = (dense_oracle(k) @ F.reshape(256, 3, order="F")).reshape(16, 16, 3, order="F")
    assert rel(mbf_apply_tensor(bf, F, k.row_shape, k.col_shape), exact) <= 1e-3


def test_zero_and_unit_inputs(dft64):
    k, bf = dft64
    assert not np.any(mbf_apply(bf, np.zeros(64)))
    K = dense_oracle(k)
    for j in (0, 17, 63):
        e = np.zeros(64)
        e[j] = 1
        assert rel(mbf_apply(bf, e), K[:, j]) <= 10 * 1e-6


def test_shape_errors(dft64):
    _, bf = dft64
    with pytest.raises(ValueError):
        mbf_apply(bf, np.zeros(63))
    with pytest.raises(ValueError):
        mbf_construct(make_kernel("dft", 48, 1), L=5)
    with pytest.raises(ValueError):
        mbf_construct(make_kernel("dft", 16, 1), L=1, tol=0)


def test_nested_basis_interpolates_full_columns(dft64):
    k, bf = dft64
    K = dense_oracle(k)
    Lt, Ls, L = bf.Lt, bf.Ls, bf.L
    rt, ct = DyadicTree(64, L), DyadicTree(64, L)
    for l in range(Lt + 1):
        for s in range(1 << Ls):
            tau = (5 * s + l) % (1 << l)
            for nu in range(1 << (Lt - l)):
                skel, X = effective_interp(bf, l, s, tau, nu)
                # nu at relative depth Lt - l under s covers these original columns
                depth = Ls + Lt - l
                cn = ct.node(depth, (s << (Lt - l)) + nu)
                rn = rt.node(l, tau)
                B = K[rn.start : rn.stop, cn.start : cn.stop]
                assert np.all((skel >= cn.start) & (skel < cn.stop))
                assert rel(K[rn.start : rn.stop][:, skel] @ X, B) <= 10 * 1e-6


def test_assembled_factors_are_block_sparse_and_multiply_out(rng):
    k = make_kernel("dft", 32, 1)
    bf = mbf_construct(k, L=3, tol=1e-8, leaf_size=4)
    factors = assemble_factors(bf)
    names = [f.name for f in factors]
    assert names == ["V", "W1", "K", "P2", "P1", "U"]
    # a column-side block (l, tau, s, nu) may only read its two children
    for f in factors[1 : 1 + bf.Lt]:
        for (lab, a, b) in f.row_blocks:
            l, tau, s, nu = lab
            allowed = {(l - 1, tau >> 1, s, 2 * nu), (l - 1, tau >> 1, s, 2 * nu + 1)}
            for (clab, c0, c1) in f.col_blocks:
                if clab not in allowed:
                    assert not np.any(f.matrix[a:b, c0:c1])
    core = factors[1 + bf.Lt]
    for (lab, a, b) in core.row_blocks:
        _, t, s, _ = lab
        for (clab, c0, c1) in core.col_blocks:
            if clab != (bf.Lt, t, s, 0):
                assert not np.any(core.matrix[a:b, c0:c1])
    prod = np.eye(32, dtype=complex)
    for f in factors:
        prod = f.matrix @ prod
    F = crandn(rng, 32, 4)
    assert rel(prod @ F, mbf_apply(bf, F)) <= 1e-12


def test_cores_are_exact_kernel_entries(dft64):
    k, bf = dft64
    K = dense_oracle(k)
    for (t, s), C in bf.cores.items():
        rows = bf.row_skel[(bf.Ls, t, s, 0)]
        cols = bf.col_skel[(bf.Lt, s, t, 0)]
        assert np.array_equal(C, K[np.ix_(rows, cols)])


def test_morton_order_boxes():
    order = morton_order((8, 8))
    assert np.array_equal(np.sort(order), np.arange(64))
    sub = np.stack(np.unravel_index(order, (8, 8), order="F"))
    # every dyadic block of 4^j consecutive positions is a 2^j x 2^j box
    for size in (4, 16):
        side = int(np.sqrt(size))
        for b in range(0, 64, size):
            box = sub[:, b : b + size]
            assert all(np.ptp(box[m]) == side - 1 for m in range(2))
    with pytest.raises(ValueError):
        morton_order((8, 4))


def test_matrix_kernel_from_function():
    A = MatrixKernel(lambda i, j: np.exp(1j * i * j / 7.0), 32, 32)
    bf = mbf_construct(A, L=1, tol=1e-8, leaf_size=4)
    x = np.ones(32)
    assert rel(mbf_apply(bf, x), A.dense() @ x) <= 1e-7


def test_d1_memory_matches_tensor_butterfly():
    k = make_kernel("dft", 64, 1)
    t = tbf_construct(k, L=4, tol=1e-6, seed=2)
    m = mbf_construct(k, L=4, tol=1e-6, seed=2)
    assert tbf_memory(t).breakdown == m.memory_breakdown()


def _apply_time(bf, x, repeats=7):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        mbf_apply(bf, x)
        best = min(best, time.perf_counter() - t0)
    return best


@pytest.mark.slow
def test_apply_time_grows_near_linearly():
    times = []
    for n in (256, 512, 1024):
        bf = mbf_construct(make_kernel("dft", n, 1), tol=1e-6, leaf_size=8)
        times.append(_apply_time(bf, np.ones((n, 8), dtype=complex)))
    r1, r2 = times[1] / times[0], times[2] / times[1]
    # n log n per doubling is about 2.2; allow for timer noise
    assert 1.2 < r1 < 4.0 and 1.2 < r2 < 4.0
