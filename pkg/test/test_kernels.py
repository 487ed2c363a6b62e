# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
#
# Copyright 2024 The NiPreps Developers <nipreps@gmail.com>
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#
# We support and encourage derived works from this project, please read
# about our expectations at
#
#     https://www.nipreps.org/community/licensing/
#
"""Unit tests exercising the batched kernels against the oracle."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from kron_cases import (
    REAL_OPS,
    apply_op,
    assert_matches,
    make_kron2,
    random_array,
    ref_kron2,
    stored_matrix,
)

from kronbatch.kernels import KronProblem2D, gemm_a, kron1, kron2
from kronbatch.kernels.base import chunk_size, default_n_jobs, run_batched
from kronbatch.layout import BatchView, LayoutError, MatrixOp, MatrixView
from kronbatch.oracle import ref_gemm

SIZES = range(1, 17)
PRECISIONS = ("float32", "float64")


def _call(problem, A, B, X, Y, **kwargs):
    y_prior = Y.to_array().copy()
    kron2(problem, A, B, X, Y, **kwargs)
    return y_prior


def test_kron1_examples(rng):
    A = MatrixView.from_array(np.eye(3))
    X = BatchView.from_arrays(rng.standard_normal((2, 3, 1)))
    Y = BatchView.from_arrays(np.full((2, 3, 1), np.nan))
    kron1("N", 3, 3, 1.0, A, X, 0.0, Y)
    np.testing.assert_array_equal(Y.to_array(), X.to_array())

    A = MatrixView.from_array([[1.0, 2.0], [3.0, 4.0]])
    X = BatchView.from_arrays(np.ones((1, 2, 1)))
    Y = BatchView.from_arrays(np.zeros((1, 2, 1)))
    kron1("N", 2, 2, 1.0, A, X, 0.0, Y)
    assert Y.to_array().ravel().tolist() == [3.0, 7.0]


@pytest.mark.parametrize("op_a", REAL_OPS)
@pytest.mark.parametrize("dtype", PRECISIONS)
@pytest.mark.parametrize("size", SIZES)
def test_kron1_oracle(rng, size, dtype, op_a):
    A = stored_matrix(rng, op_a, size, size, dtype)
    X = BatchView.from_arrays(random_array(rng, (32, size, 1), dtype), batch_stride=size + 3)
    Y = BatchView.from_arrays(random_array(rng, (32, size, 1), dtype), batch_stride=size + 1)
    y_prior = Y.to_array().copy()
    kron1(op_a, size, size, 1.5, A, X, -0.5, Y)

    for p in range(32):
        expected = MatrixView.from_array(y_prior[p].astype("float64"))
        ref_gemm(op_a, "N", 1.5, A, X.entry(p), -0.5, expected)
        assert_matches(Y.to_array()[p], expected.to_array(), dtype)


@settings(max_examples=50, deadline=None)
@given(
    dims=st.tuples(*(st.integers(1, 12) for _ in range(2))),
    op_a=st.sampled_from(REAL_OPS),
    seed=st.integers(0, 2**32 - 1),
)
def test_kron1_rectangular(dims, op_a, seed):
    rng = np.random.default_rng(seed)
    m_a, n_a = dims
    A = stored_matrix(rng, op_a, m_a, n_a)
    X = BatchView.from_arrays(random_array(rng, (8, n_a, 1)))
    Y = BatchView.from_arrays(random_array(rng, (8, m_a, 1)))
    y_prior = Y.to_array().copy()
    kron1(op_a, m_a, n_a, -1.0, A, X, 2.0, Y)

    for p in range(8):
        expected = MatrixView.from_array(y_prior[p])
        ref_gemm(op_a, "N", -1.0, A, X.entry(p), 2.0, expected)
        assert_matches(Y.to_array()[p], expected.to_array(), "float64")


def test_kron1_errors(rng):
    A = stored_matrix(rng, "N", 4, 5)
    X = BatchView.from_arrays(random_array(rng, (3, 5, 1)))
    Y = BatchView.from_arrays(random_array(rng, (3, 4, 1)))
    with pytest.raises(ValueError, match="Dimension mismatch"):
        kron1("T", 4, 5, 1.0, A, X, 0.0, Y)
    with pytest.raises(LayoutError, match="column vectors"):
        kron1("N", 4, 5, 1.0, A, X, 0.0, BatchView.from_arrays(np.zeros((3, 4, 2))))


def test_kron2_identity(rng):
    problem, A, B, X, Y = make_kron2(rng, (3, 3, 5, 5))
    A = MatrixView.from_array(np.eye(3))
    B = MatrixView.from_array(np.eye(5))
    kron2(problem, A, B, X, Y)
    np.testing.assert_array_equal(Y.to_array(), X.to_array())


def test_kron2_exact_integers(rng):
    """Integer-valued inputs are represented exactly, so results are exact too."""
    A = MatrixView.from_array(rng.integers(-5, 5, (2, 2)).astype(float))
    B = MatrixView.from_array(rng.integers(-5, 5, (2, 2)).astype(float))
    X = BatchView.from_arrays(rng.integers(-5, 5, (16, 2, 2)).astype(float))
    Y = BatchView.from_arrays(np.zeros((16, 2, 2)))
    kron2(KronProblem2D.from_views(A, B), A, B, X, Y)
    np.testing.assert_array_equal(
        Y.to_array(), ref_kron2(KronProblem2D(2, 2, 2, 2), A, B, X, np.zeros((16, 2, 2)))
    )


@pytest.mark.parametrize("ops", list(itertools.product(REAL_OPS, repeat=3)))
@pytest.mark.parametrize("dtype", PRECISIONS)
@pytest.mark.parametrize("size", SIZES)
def test_kron2_oracle(rng, size, dtype, ops):
    problem, A, B, X, Y = make_kron2(rng, (size,) * 4, ops, count=32, dtype=dtype)
    y_prior = _call(problem, A, B, X, Y)
    assert_matches(Y.to_array(), ref_kron2(problem, A, B, X, y_prior), dtype)


@pytest.mark.parametrize("ops", list(itertools.product(REAL_OPS, repeat=2)))
@pytest.mark.parametrize("dtype", PRECISIONS)
@pytest.mark.parametrize("size", SIZES)
def test_gemm_a_oracle(rng, size, dtype, ops):
    op_a, op_b = ops
    m = n = k = size
    A = BatchView.from_arrays(
        apply_op(op_a, random_array(rng, (32, m, k), dtype)).copy(), batch_stride=None
    )
    B = stored_matrix(rng, op_b, k, n, dtype)
    C = BatchView.from_arrays(random_array(rng, (32, m, n), dtype))
    c_prior = C.to_array().copy()
    gemm_a(op_a, op_b, m, n, k, 2.0, A, B, 0.5, C, parallel_hint=2)

    for p in range(32):
        expected = MatrixView.from_array(c_prior[p].astype("float64"))
        ref_gemm(op_a, op_b, 2.0, A.entry(p), B, 0.5, expected)
        assert_matches(C.to_array()[p], expected.to_array(), dtype)


@settings(max_examples=50, deadline=None)
@given(
    dims=st.tuples(*(st.integers(1, 12) for _ in range(3))),
    ops=st.tuples(*(st.sampled_from(REAL_OPS) for _ in range(2))),
    seed=st.integers(0, 2**32 - 1),
)
def test_gemm_a_rectangular(dims, ops, seed):
    rng = np.random.default_rng(seed)
    (m, n, k), (op_a, op_b) = dims, ops
    A = BatchView.from_arrays(apply_op(op_a, random_array(rng, (8, m, k))).copy())
    B = stored_matrix(rng, op_b, k, n)
    C = BatchView.from_arrays(random_array(rng, (8, m, n)))
    c_prior = C.to_array().copy()
    gemm_a(op_a, op_b, m, n, k, 0.5, A, B, -1.0, C)

    for p in range(8):
        expected = MatrixView.from_array(c_prior[p])
        ref_gemm(op_a, op_b, 0.5, A.entry(p), B, -1.0, expected)
        assert_matches(C.to_array()[p], expected.to_array(), "float64")


def test_gemm_a_examples(rng):
    A = BatchView.from_arrays(rng.standard_normal((4, 3, 5)))
    B = MatrixView.from_array(np.eye(5))
    C = BatchView.from_arrays(np.full((4, 3, 5), np.nan))
    gemm_a("N", "N", 3, 5, 5, 1.0, A, B, 0.0, C)
    np.testing.assert_array_equal(C.to_array(), A.to_array())

    # alpha = 0, beta = 1: C unchanged, A and B never read
    nan_a = BatchView.from_arrays(np.full((4, 3, 5), np.nan))
    nan_b = MatrixView.from_array(np.full((5, 5), np.nan))
    gemm_a("N", "N", 3, 5, 5, 0.0, nan_a, nan_b, 1.0, C)
    np.testing.assert_array_equal(C.to_array(), A.to_array())


def _shapes():
    return st.tuples(*(st.integers(1, 12) for _ in range(4)))


@settings(max_examples=50, deadline=None)
@given(
    dims=_shapes(),
    ops=st.tuples(*(st.sampled_from(REAL_OPS) for _ in range(3))),
    seed=st.integers(0, 2**32 - 1),
)
def test_kron2_rectangular(dims, ops, seed):
    rng = np.random.default_rng(seed)
    problem, A, B, X, Y = make_kron2(rng, dims, ops, count=8, alpha=1.0, beta=0.5)
    y_prior = _call(problem, A, B, X, Y)
    assert_matches(Y.to_array(), ref_kron2(problem, A, B, X, y_prior), "float64")


@pytest.mark.parametrize("alpha", (-1.0, 0.0, 0.5, 1.0, 2.0))
@pytest.mark.parametrize("beta", (-1.0, 0.0, 0.5, 1.0, 2.0))
@pytest.mark.parametrize("dtype", PRECISIONS)
def test_kron2_affine(rng, alpha, beta, dtype):
    """output(α, β) = α·output(1, 0) + β·Y_prior."""
    problem, A, B, X, Y = make_kron2(rng, (5, 4, 3, 6), ("T", "N", "T"), count=16, dtype=dtype)
    y_prior = Y.to_array().copy()
    kron2(problem, A, B, X, Y)
    unit = Y.to_array().astype("float64")

    Y.to_array(writeable=True)[...] = y_prior
    scaled = KronProblem2D(5, 4, 3, 6, "T", "N", "T", alpha=alpha, beta=beta)
    kron2(scaled, A, B, X, Y)
    expected = alpha * unit + beta * y_prior.astype("float64")
    error = np.abs(Y.to_array() - expected).max()
    assert error <= np.finfo(dtype).eps * np.abs(expected).max(initial=1.0)


@pytest.mark.parametrize("ops", list(itertools.product(REAL_OPS, repeat=3)))
def test_kron2_nan_safety(rng, ops):
    """With β = 0, prior outputs (even NaN) are never read."""
    problem, A, B, X, Y = make_kron2(rng, (4, 5, 6, 3), ops, count=20, alpha=0.5)
    Y.data[...] = np.nan
    kron2(problem, A, B, X, Y)
    assert np.isfinite(Y.to_array()).all()
    assert np.isnan(Y.data).sum() == Y.data.size - Y.to_array().size

    # alpha = 0: neither the inputs nor the outputs are read
    X.data[...] = np.nan
    kron2(KronProblem2D(4, 5, 6, 3, *ops, alpha=0.0, beta=0.0), A, B, X, Y)
    assert not Y.to_array().any()


def _padded(stack, fill=np.nan):
    """ld = dim + 3, batch_stride = footprint + 7."""
    ld = stack.shape[1] + 3
    return BatchView.from_arrays(
        stack, ld=ld, batch_stride=ld * stack.shape[2] + 7, fill=fill
    )


@pytest.mark.parametrize("ops", list(itertools.product(REAL_OPS, repeat=3)))
@pytest.mark.parametrize("dtype", PRECISIONS)
def test_kron2_padding_invariance(rng, ops, dtype):
    problem, A, B, X, Y = make_kron2(rng, (7, 5, 4, 6), ops, count=50, dtype=dtype, beta=0.5)
    y_prior = Y.to_array().copy()
    kron2(problem, A, B, X, Y)

    A_pad = MatrixView.from_array(A.to_array(), ld=A.rows + 3, fill=np.nan)
    B_pad = MatrixView.from_array(B.to_array(), ld=B.rows + 3, fill=np.nan)
    X_pad = _padded(X.to_array())
    Y_pad = _padded(y_prior)
    kron2(problem, A_pad, B_pad, X_pad, Y_pad)

    np.testing.assert_array_equal(Y_pad.to_array(), Y.to_array())
    assert np.isnan(Y_pad.data).sum() == Y_pad.data.size - Y_pad.to_array().size


def test_kron2_transpose_consistency(rng):
    problem, A, B, X, Y = make_kron2(rng, (6, 4, 5, 3), ("T", "N", "N"), count=40)
    kron2(problem, A, B, X, Y)

    A_t = MatrixView.from_array(A.to_array().T)
    Y_n = BatchView.from_arrays(np.zeros((40, 6, 5)))
    kron2(KronProblem2D(6, 4, 5, 3), A_t, B, X, Y_n)
    np.testing.assert_array_equal(Y.to_array(), Y_n.to_array())

    # op_x = Transpose equals the call on the materialized transposes
    problem, A, B, X, Y = make_kron2(rng, (6, 4, 5, 3), ("N", "N", "T"), count=40)
    kron2(problem, A, B, X, Y)
    X_t = BatchView.from_arrays(X.to_array().transpose(0, 2, 1))
    Y_n = BatchView.from_arrays(np.zeros((40, 6, 5)))
    kron2(KronProblem2D(6, 4, 5, 3), A, B, X_t, Y_n)
    np.testing.assert_array_equal(Y.to_array(), Y_n.to_array())


def test_kron2_batch_independence(rng):
    problem, A, B, X, Y = make_kron2(rng, (5, 5, 5, 5), count=64, beta=-1.0)
    y_prior = Y.to_array().copy()
    kron2(problem, A, B, X, Y)

    order = rng.permutation(64)
    X_perm = BatchView.from_arrays(X.to_array()[order])
    Y_perm = BatchView.from_arrays(y_prior[order])
    kron2(problem, A, B, X_perm, Y_perm)
    np.testing.assert_allclose(Y_perm.to_array(), Y.to_array()[order], rtol=1e-14, atol=1e-14)


@pytest.mark.parametrize("n_jobs", (2, -1))
def test_determinism_across_workers(rng, n_jobs):
    """Results are bit-identical for any number of workers."""
    problem, A, B, X, Y = make_kron2(rng, (8, 8, 8, 8), ("N", "T", "T"), count=300, beta=0.5)
    y_prior = Y.to_array().copy()
    kron2(problem, A, B, X, Y, n_jobs=1, chunk_bytes=4096)

    Y_par = BatchView.from_arrays(y_prior)
    kron2(problem, A, B, X, Y_par, n_jobs=n_jobs, chunk_bytes=4096)
    np.testing.assert_array_equal(Y_par.to_array(), Y.to_array())


@pytest.mark.parametrize(
    ("dims", "count"),
    [
        ((0, 3, 4, 4), 5),
        ((3, 3, 0, 4), 5),
        ((3, 3, 4, 4), 0),
        ((3, 0, 4, 4), 5),
        ((3, 3, 4, 0), 5),
    ],
)
def test_kron2_zero_dimensions(rng, dims, count):
    problem, A, B, X, Y = make_kron2(rng, dims, count=count, beta=2.0)
    y_prior = Y.to_array().copy()
    kron2(problem, A, B, X, Y)
    # Empty sums are zero: only the beta-scaling remains
    np.testing.assert_array_equal(Y.to_array(), 2.0 * y_prior)


def test_kron2_complex_conjugate(rng):
    problem, A, B, X, Y = make_kron2(
        rng, (3, 4, 5, 2), ("C", "N", "C"), count=10, dtype="complex128", beta=0.5
    )
    y_prior = _call(problem, A, B, X, Y)
    assert_matches(Y.to_array(), ref_kron2(problem, A, B, X, y_prior), "complex128")


def test_kron2_conjugate_is_transpose_on_reals(rng):
    problem, A, B, X, Y = make_kron2(rng, (3, 4, 5, 2), ("C", "C", "C"), count=10)
    y_prior = _call(problem, A, B, X, Y)
    expected = Y.to_array().copy()

    Y.to_array(writeable=True)[...] = y_prior
    kron2(KronProblem2D(3, 4, 5, 2, "T", "T", "T"), A, B, X, Y)
    np.testing.assert_array_equal(Y.to_array(), expected)


def test_kron2_errors(rng):
    problem, A, B, X, Y = make_kron2(rng, (3, 4, 5, 2), count=4)

    with pytest.raises(ValueError, match="Dimension mismatch"):
        kron2(KronProblem2D(3, 4, 5, 3), A, B, X, Y)
    with pytest.raises(ValueError, match="Dimension mismatch"):
        kron2(problem, A, B, X, BatchView.from_arrays(np.zeros((5, 3, 5))))
    with pytest.raises(ValueError, match="Dimension mismatch"):
        kron2(KronProblem2D(3, 4, 5, 2, op_x="T"), A, B, X, Y)

    with pytest.raises(LayoutError, match="element type mismatch"):
        kron2(problem, A, B, X, BatchView.from_arrays(np.zeros((4, 3, 5), dtype="float32")))

    with pytest.raises(LayoutError, match="batch_stride < entry footprint"):
        kron2(problem, A, B, BatchView(X.base, 4, batch_stride=7), Y)

    readonly = Y.data.copy()
    readonly.flags.writeable = False
    with pytest.raises(LayoutError, match="read-only"):
        kron2(problem, A, B, X, BatchView(MatrixView(readonly, 3, 5), 4))


def test_problem_from_views(rng):
    A = stored_matrix(rng, "N", 3, 4)
    B = stored_matrix(rng, "T", 5, 2)
    problem = KronProblem2D.from_views(A, B, op_b="T", op_x=MatrixOp.Transpose, beta=1.0)
    assert (problem.m_a, problem.n_a, problem.m_b, problem.n_b) == (3, 4, 5, 2)
    assert problem.op_b is MatrixOp.Transpose
    assert problem.op_x is MatrixOp.Transpose

    with pytest.raises(ValueError, match="Unsupported matrix operation"):
        KronProblem2D(1, 1, 1, 1, op_a="Q")


def test_default_n_jobs(monkeypatch):
    monkeypatch.delenv("KRONBATCH_NJOBS", raising=False)
    assert default_n_jobs() == 1
    monkeypatch.setenv("KRONBATCH_NJOBS", "3")
    assert default_n_jobs() == 3


def test_chunking():
    assert chunk_size(1024, 4096) == 4
    assert chunk_size(10**9) == 1

    seen = []
    run_batched(lambda start, stop: seen.append((start, stop)), 10, 3, n_jobs=1)
    assert seen == [(0, 3), (3, 6), (6, 9), (9, 10)]

    covered = np.zeros(1000, dtype=int)

    def _mark(start, stop):
        covered[start:stop] += 1

    run_batched(_mark, 1000, 7, n_jobs=4)
    assert (covered == 1).all()
