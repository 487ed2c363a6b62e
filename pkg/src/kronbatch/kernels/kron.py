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
"""
Batched Kronecker product action (``kron1``, ``kron2``, ``kron3``) and ``gemm_a``.

The interfaces mirror BLAS-like batched routines.
For every batch entry :math:`p`:

* ``kron1``: :math:`Y^p \\gets \\alpha\\, op(A) X^p + \\beta Y^p` (a batched GEMV);
* ``kron2``: :math:`Y^p \\gets \\alpha\\, op(A)\\, op(X^p)\\, op(B)^T + \\beta Y^p`, i.e.,
  :math:`vec(Y^p) = \\alpha\\, (op(B) \\otimes op(A))\\, vec(op(X^p)) + \\beta\\, vec(Y^p)`;
* ``kron3``: :math:`vec(Y^p) = \\alpha\\, (op(C) \\otimes op(B) \\otimes op(A))\\, vec(X^p)
  + \\beta\\, vec(Y^p)`;
* ``gemm_a``: :math:`C^p \\gets \\alpha\\, op(A^p)\\, op(B) + \\beta C^p`, where only
  :math:`A` varies across the batch.

The explicit Kronecker product matrix is never formed.
The constant matrices are resolved (transposed/conjugated) once per call,
then the batch is processed in chunks of packed entries with one large GEMM
per stage and chunk.
When :math:`\\beta = 0`, outputs are never read.

"""

import logging

import numpy as np

from kronbatch.kernels.base import (
    KronProblem2D,
    KronProblem3D,
    Workspace,
    WorkspaceError,
    chunk_size,
    op_entries,
    pack,
    resolve_op,
    run_batched,
    scale,
    store,
)
from kronbatch.layout import (
    Array3View,
    BatchView,
    LayoutError,
    MatrixOp,
    check_element_types,
    op_dims,
    validate_batch,
)

LOGGER = logging.getLogger(__name__)


def _scalars(dtype, alpha, beta):
    return dtype.type(alpha), dtype.type(beta)


def _conjugates(op):
    return MatrixOp.parse(op) is MatrixOp.ConjTranspose


def _kron2_packed(a, b, x):
    """``a @ x[p] @ b.T`` for every entry of a packed ``(n, n_a, n_b)`` block."""
    count, n_a, n_b = x.shape
    # B is applied first, with a single GEMM over all rows of the chunk
    w = (x.reshape(count * n_a, n_b) @ b.T).reshape(count, n_a, b.shape[0])
    return np.matmul(a, w)


def _gemm_packed(a, b):
    """``a[p] @ b`` for every entry of a packed ``(n, m, k)`` block, as one GEMM."""
    count, m, k = a.shape
    return (a.reshape(count * m, k) @ b).reshape(count, m, b.shape[1])


def kron1(op_a, m_a, n_a, alpha, A, X, beta, Y, *, n_jobs=None, chunk_bytes=None):
    """
    Batched 1-D Kronecker action (``TKRON1``), a batched GEMV.

    Computes :math:`Y^p \\gets \\alpha\\, op(A) X^p + \\beta Y^p` for every entry of the batch.

    Parameters
    ----------
    op_a : :obj:`~kronbatch.layout.MatrixOp` or :obj:`str`
        Operation applied to ``A`` (``transa``).
    m_a, n_a : :obj:`int`
        Dimensions of :math:`op(A)`.
    alpha, beta : scalar
        Scaling factors.
    A : :obj:`~kronbatch.layout.MatrixView`
        The constant matrix (``A, lda``).
    X : :obj:`~kronbatch.layout.BatchView`
        Input vectors, stored as ``n_a × 1`` matrices (``X, ldxp``).
    Y : :obj:`~kronbatch.layout.BatchView`
        Output vectors (``m_a × 1``) over a writeable buffer (``Y, ldyp``).
        Its batch stride is independent of the input's.
    n_jobs : :obj:`int`, optional
        Number of workers (see :func:`~kronbatch.kernels.base.default_n_jobs`).

    Examples
    --------
    >>> from kronbatch.layout import BatchView, MatrixView
    >>> A = MatrixView.from_array([[1.0, 2.0], [3.0, 4.0]])
    >>> X = BatchView.from_arrays(np.ones((1, 2, 1)))
    >>> Y = BatchView.from_arrays(np.zeros((1, 2, 1)))
    >>> kron1("N", 2, 2, 1.0, A, X, 0.0, Y)
    >>> Y.data.tolist()
    [3.0, 7.0]

    """
    op_a = MatrixOp.parse(op_a)
    A.validate()
    validate_batch(X)
    validate_batch(Y, writeable=True)
    dtype = check_element_types(A, X, Y)
    if X.ndim != 2 or X.entry_shape[1] != 1 or Y.ndim != 2 or Y.entry_shape[1] != 1:
        raise LayoutError("kron1 operates on batches of column vectors (cols = 1)")
    if op_dims(op_a, A.rows, A.cols) != (m_a, n_a):
        raise ValueError(f"Dimension mismatch: op(A) is {A.shape}, expected {(m_a, n_a)}.")
    if X.entry_shape[0] != n_a or Y.entry_shape[0] != m_a or len(X) != len(Y):
        raise ValueError("Dimension mismatch between op(A) and the X/Y batches.")

    alpha, beta = _scalars(dtype, alpha, beta)
    count = len(Y)
    if count == 0 or m_a == 0:
        return

    y_all = Y.to_array(writeable=True)[..., 0]
    if alpha == 0:
        scale(y_all, beta)
        return

    a = resolve_op(op_a, A.to_array())
    x_all = X.to_array()[..., 0]

    def _chunk(start, stop):
        z = pack(x_all[start:stop]) @ a.T
        store(y_all[start:stop], z, alpha, beta)

    chunk = chunk_size(dtype.itemsize * (n_a + 2 * m_a), chunk_bytes)
    run_batched(_chunk, count, chunk, n_jobs=n_jobs)


def kron2(problem, A, B, X, Y, *, n_jobs=None, chunk_bytes=None):
    """
    Batched 2-D Kronecker action (``TKRON2``).

    Computes :math:`Y^p \\gets \\alpha\\, op(A)\\, op(X^p)\\, op(B)^T + \\beta Y^p`
    for every entry of the batch.

    Parameters
    ----------
    problem : :obj:`~kronbatch.kernels.base.KronProblem2D`
        Operations (``transa, transb, transx``), dimensions (``ma, na, mb, nb``),
        and scalars (``alpha, beta``).
    A, B : :obj:`~kronbatch.layout.MatrixView`
        The constant component matrices (``A, lda``, ``B, ldb``).
    X : :obj:`~kronbatch.layout.BatchView`
        Inputs (``X, ldx, ldxp``).
        Each stored :math:`X^p` is such that :math:`op(X^p)` is ``n_a × n_b``;
        ``ldx`` describes the *stored* matrix.
    Y : :obj:`~kronbatch.layout.BatchView`
        Outputs (``Y, ldy, ldyp``), ``m_a × m_b`` each, over a writeable buffer.
    n_jobs : :obj:`int`, optional
        Number of workers.

    """
    A.validate()
    B.validate()
    validate_batch(X)
    validate_batch(Y, writeable=True)
    dtype = check_element_types(A, B, X, Y)
    if X.ndim != 2 or Y.ndim != 2:
        raise LayoutError("kron2 operates on batches of matrices")
    problem.check(A, B, X, Y)

    alpha, beta = _scalars(dtype, problem.alpha, problem.beta)
    count = len(Y)
    if count == 0 or problem.m_a == 0 or problem.m_b == 0:
        return

    y_all = Y.to_array(writeable=True)
    if alpha == 0:
        scale(y_all, beta)
        return

    a = resolve_op(problem.op_a, A.to_array())
    b = resolve_op(problem.op_b, B.to_array())
    x_all = op_entries(problem.op_x, X.to_array())
    conj_x = _conjugates(problem.op_x)

    def _chunk(start, stop):
        z = _kron2_packed(a, b, pack(x_all[start:stop], conjugate=conj_x))
        store(y_all[start:stop], z, alpha, beta)

    chunk = chunk_size(problem.entry_bytes(dtype.itemsize), chunk_bytes)
    run_batched(_chunk, count, chunk, n_jobs=n_jobs)


def gemm_a(
    op_a,
    op_b,
    m,
    n,
    k,
    alpha,
    A,
    B,
    beta,
    C,
    parallel_hint=None,
    *,
    n_jobs=None,
    chunk_bytes=None,
):
    """
    Batched GEMM with a varying left factor (``TGEMM_A``).

    Computes :math:`C^p \\gets \\alpha\\, op(A^p)\\, op(B) + \\beta C^p`, with
    :math:`op(B)` shared by the whole batch.

    Parameters
    ----------
    op_a, op_b : :obj:`~kronbatch.layout.MatrixOp` or :obj:`str`
        Operations (``transa, transb``).
    m, n, k : :obj:`int`
        :math:`op(A^p)` is ``m × k``, :math:`op(B)` is ``k × n``.
    A : :obj:`~kronbatch.layout.BatchView`
        The varying factors (``A, lda, lda2``).
    B : :obj:`~kronbatch.layout.MatrixView`
        The constant factor (``B, ldb``).
    C : :obj:`~kronbatch.layout.BatchView`
        Outputs (``C, ldc, ldc2``) over a writeable buffer.
    parallel_hint : :obj:`int`, optional
        Suggested number of worker chunks (the ``grid_size`` launch parameter);
        used as the number of workers when ``n_jobs`` is not given.

    Examples
    --------
    >>> from kronbatch.layout import BatchView, MatrixView
    >>> A = BatchView.from_arrays([[[1.0, 2.0], [3.0, 4.0]]])
    >>> B = MatrixView.from_array(np.eye(2))
    >>> C = BatchView.from_arrays(np.zeros((1, 2, 2)))
    >>> gemm_a("T", "N", 2, 2, 2, 1.0, A, B, 0.0, C)
    >>> C.to_array()[0].tolist()
    [[1.0, 3.0], [2.0, 4.0]]

    """
    op_a = MatrixOp.parse(op_a)
    op_b = MatrixOp.parse(op_b)
    B.validate()
    validate_batch(A)
    validate_batch(C, writeable=True)
    dtype = check_element_types(A, B, C)
    if A.ndim != 2 or C.ndim != 2:
        raise LayoutError("gemm_a operates on batches of matrices")
    if op_dims(op_a, *A.entry_shape) != (m, k):
        raise ValueError(f"Dimension mismatch: op(A^p) is not {m} x {k}.")
    if op_dims(op_b, B.rows, B.cols) != (k, n):
        raise ValueError(f"Dimension mismatch: op(B) is not {k} x {n}.")
    if C.entry_shape != (m, n) or len(A) != len(C):
        raise ValueError(f"Dimension mismatch: C^p must be {m} x {n}, one per A^p.")

    alpha, beta = _scalars(dtype, alpha, beta)
    count = len(C)
    if count == 0 or m == 0 or n == 0:
        return

    c_all = C.to_array(writeable=True)
    if alpha == 0:
        scale(c_all, beta)
        return

    b = resolve_op(op_b, B.to_array())
    a_all = op_entries(op_a, A.to_array())
    conj_a = _conjugates(op_a)

    def _chunk(start, stop):
        z = _gemm_packed(pack(a_all[start:stop], conjugate=conj_a), b)
        store(c_all[start:stop], z, alpha, beta)

    chunk = chunk_size(dtype.itemsize * (2 * m * k + 2 * m * n), chunk_bytes)
    run_batched(_chunk, count, chunk, n_jobs=n_jobs or parallel_hint)


def kron3_workspace_size(problem, batch_count):
    """
    Elements of workspace required by :func:`kron3` (``m_a·m_b·n_c`` per entry).

    Examples
    --------
    >>> kron3_workspace_size(KronProblem3D(4, 4, 4, 4, 4, 4), 10)
    640
    >>> kron3_workspace_size(KronProblem3D(16, 16, 16, 16, 16, 16), 100000)
    409600000
    >>> kron3_workspace_size(KronProblem3D(0, 3, 3, 3, 3, 3), 10)
    0

    """
    return problem.workspace_size(batch_count)


def _tmp_batch(work, problem, batch_count):
    """The intermediate arrays of all entries, as a column-major batch over the workspace."""
    m_a, m_b, n_c = problem.tmp_shape
    base = Array3View(work.data, m_a, m_b, n_c, ld=max(m_a, 1), ld2=m_a * m_b)
    return BatchView(base, batch_count, batch_stride=m_a * m_b * n_c)


def kron3(problem, A, B, C, X, Y, work, *, n_jobs=None, chunk_bytes=None):
    """
    Batched 3-D Kronecker action (``TKRON3``).

    Computes :math:`vec(Y^p) \\gets \\alpha\\, (op(C) \\otimes op(B) \\otimes op(A))\\,
    vec(X^p) + \\beta\\, vec(Y^p)` in two stages per entry:

    1. :math:`tmp(:,:,N) = op(A)\\, X^p(:,:,N)\\, op(B)^T` for every plane ``N``
       (the 2-D action, into the workspace);
    2. :math:`Y^p(:,J,:) \\gets \\alpha\\, tmp(:,J,:)\\, op(C)^T + \\beta\\, Y^p(:,J,:)`
       for every ``J``, where :math:`tmp(:,J,:)` is read in place as an
       ``m_a × n_c`` matrix with leading dimension ``m_a·m_b`` (the varying-A GEMM).

    Parameters
    ----------
    problem : :obj:`~kronbatch.kernels.base.KronProblem3D`
        Operations (``transa, transb, transc``), dimensions, and scalars.
    A, B, C : :obj:`~kronbatch.layout.MatrixView`
        The constant component matrices.
    X : :obj:`~kronbatch.layout.BatchView`
        Inputs (``X, ldx, ldx2, ldxp``), ``n_a × n_b × n_c`` each.
    Y : :obj:`~kronbatch.layout.BatchView`
        Outputs (``Y, ldy, ldy2, ldyp``), ``m_a × m_b × m_c`` each.
    work : :obj:`~kronbatch.kernels.base.Workspace`
        Scratch space of at least :func:`kron3_workspace_size` elements.
        Contents on entry are ignored, and unspecified on exit.

    Raises
    ------
    :obj:`~kronbatch.kernels.base.WorkspaceError`
        When the workspace is too small (reporting the required size).

    """
    A.validate()
    B.validate()
    C.validate()
    validate_batch(X)
    validate_batch(Y, writeable=True)
    if not isinstance(work, Workspace):
        work = Workspace(work)
    dtype = check_element_types(A, B, C, X, Y, work)
    if X.ndim != 3 or Y.ndim != 3:
        raise LayoutError("kron3 operates on batches of 3-D arrays")
    problem.check(A, B, C, X, Y)

    count = len(Y)
    required = problem.workspace_size(count)
    if work.capacity < required:
        raise WorkspaceError(required, work.capacity)
    if work.data.ndim != 1 or not work.data.flags.c_contiguous or not work.data.flags.writeable:
        raise LayoutError("workspace must be a flat, contiguous, writeable buffer")

    alpha, beta = _scalars(dtype, problem.alpha, problem.beta)
    if count == 0 or problem.m_a == 0 or problem.m_b == 0 or problem.m_c == 0:
        return

    y_all = Y.to_array(writeable=True)
    if alpha == 0:
        scale(y_all, beta)
        return

    a = resolve_op(problem.op_a, A.to_array())
    b = resolve_op(problem.op_b, B.to_array())
    c = resolve_op(problem.op_c, C.to_array())
    x_all = X.to_array()
    tmp_all = _tmp_batch(work, problem, count).to_array(writeable=True)
    m_a, n_a, m_b, n_b = problem.m_a, problem.n_a, problem.m_b, problem.n_b
    m_c, n_c = problem.m_c, problem.n_c

    # y(:, j, :) for all j, as (entries, j, i, k)
    y_slices = y_all.transpose(0, 2, 1, 3)

    def _chunk(start, stop):
        size = stop - start

        # Stage 1: the 2-D action on every plane, into the workspace
        planes = pack(x_all[start:stop].transpose(0, 3, 1, 2))
        z = _kron2_packed(a, b, planes.reshape(size * n_c, n_a, n_b))
        tmp_all[start:stop] = z.reshape(size, n_c, m_a, m_b).transpose(0, 2, 3, 1)

        # Stage 2: tmp(:, j, :) @ op(C)^T for every j, read back from the workspace
        slices = pack(tmp_all[start:stop].transpose(0, 2, 1, 3))
        z = _gemm_packed(slices.reshape(size * m_b, m_a, n_c), c.T)
        store(y_slices[start:stop], z.reshape(size, m_b, m_a, m_c), alpha, beta)

    chunk = chunk_size(problem.entry_bytes(dtype.itemsize), chunk_bytes)
    LOGGER.debug("kron3: %d entries, %d elements of workspace.", count, required)
    run_batched(_chunk, count, chunk, n_jobs=n_jobs)
