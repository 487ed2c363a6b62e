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
"""Problem descriptors, workspace, and the chunked batch executor shared by all kernels."""

import logging
import os

import attr
import numpy as np
from joblib import Parallel, delayed, effective_n_jobs

from kronbatch.layout import MatrixOp, op_dims
from kronbatch.utils import chunk_ranges, worker_ranges

LOGGER = logging.getLogger(__name__)

CHUNK_BYTES = 256 * 1024
"""Target working-set size (in bytes) of one chunk of batch entries."""

_INDEX_MAX = np.iinfo(np.int64).max


class WorkspaceError(ValueError):
    """The caller-provided workspace cannot hold the intermediate results."""

    def __init__(self, required, capacity):
        self.required = required
        self.capacity = capacity
        super().__init__(
            f"Insufficient workspace: {required} elements required, {capacity} provided."
        )


def _checked_product(*factors):
    product = 1
    for factor in factors:
        product *= int(factor)
    if product > _INDEX_MAX:
        raise OverflowError(f"Size {' x '.join(str(f) for f in factors)} overflows int64.")
    return product


@attr.s(frozen=True, slots=True)
class KronProblem2D:
    """Dimensions, operations, and scalars of ``Y ← α·K(op(A), op(B))(op(X)) + β·Y``."""

    m_a = attr.ib(converter=int)
    n_a = attr.ib(converter=int)
    m_b = attr.ib(converter=int)
    n_b = attr.ib(converter=int)
    op_a = attr.ib(default=MatrixOp.NoTranspose, converter=MatrixOp.parse)
    op_b = attr.ib(default=MatrixOp.NoTranspose, converter=MatrixOp.parse)
    op_x = attr.ib(default=MatrixOp.NoTranspose, converter=MatrixOp.parse)
    alpha = attr.ib(default=1.0)
    beta = attr.ib(default=0.0)

    @classmethod
    def from_views(cls, A, B, **kwargs):
        """Derive ``m_a, n_a, m_b, n_b`` from the stored component matrices."""
        op_a = MatrixOp.parse(kwargs.get("op_a", MatrixOp.NoTranspose))
        op_b = MatrixOp.parse(kwargs.get("op_b", MatrixOp.NoTranspose))
        return cls(*op_dims(op_a, A.rows, A.cols), *op_dims(op_b, B.rows, B.cols), **kwargs)

    def check(self, A, B, X, Y):
        """Verify the supplied views against the problem dimensions."""
        _expect("op(A)", op_dims(self.op_a, A.rows, A.cols), (self.m_a, self.n_a))
        _expect("op(B)", op_dims(self.op_b, B.rows, B.cols), (self.m_b, self.n_b))
        _expect("op(X)", op_dims(self.op_x, *X.entry_shape), (self.n_a, self.n_b))
        _expect("Y", Y.entry_shape, (self.m_a, self.m_b))
        _expect_batch(X, Y)

    def entry_bytes(self, itemsize):
        """Bytes touched per batch entry (input, intermediate, output)."""
        m_a, n_a, m_b, n_b = self.m_a, self.n_a, self.m_b, self.n_b
        return itemsize * (n_a * n_b + n_a * m_b + 2 * m_a * m_b)


@attr.s(frozen=True, slots=True)
class KronProblem3D:
    """Dimensions, operations, and scalars of ``Y ← α·K(op(A), op(B), op(C))(X) + β·Y``."""

    m_a = attr.ib(converter=int)
    n_a = attr.ib(converter=int)
    m_b = attr.ib(converter=int)
    n_b = attr.ib(converter=int)
    m_c = attr.ib(converter=int)
    n_c = attr.ib(converter=int)
    op_a = attr.ib(default=MatrixOp.NoTranspose, converter=MatrixOp.parse)
    op_b = attr.ib(default=MatrixOp.NoTranspose, converter=MatrixOp.parse)
    op_c = attr.ib(default=MatrixOp.NoTranspose, converter=MatrixOp.parse)
    alpha = attr.ib(default=1.0)
    beta = attr.ib(default=0.0)

    @classmethod
    def from_views(cls, A, B, C, **kwargs):
        """Derive all six dimensions from the stored component matrices."""
        op_a = MatrixOp.parse(kwargs.get("op_a", MatrixOp.NoTranspose))
        op_b = MatrixOp.parse(kwargs.get("op_b", MatrixOp.NoTranspose))
        op_c = MatrixOp.parse(kwargs.get("op_c", MatrixOp.NoTranspose))
        return cls(
            *op_dims(op_a, A.rows, A.cols),
            *op_dims(op_b, B.rows, B.cols),
            *op_dims(op_c, C.rows, C.cols),
            **kwargs,
        )

    def check(self, A, B, C, X, Y):
        """Verify the supplied views against the problem dimensions (no op on X)."""
        _expect("op(A)", op_dims(self.op_a, A.rows, A.cols), (self.m_a, self.n_a))
        _expect("op(B)", op_dims(self.op_b, B.rows, B.cols), (self.m_b, self.n_b))
        _expect("op(C)", op_dims(self.op_c, C.rows, C.cols), (self.m_c, self.n_c))
        _expect("X", X.entry_shape, (self.n_a, self.n_b, self.n_c))
        _expect("Y", Y.entry_shape, (self.m_a, self.m_b, self.m_c))
        _expect_batch(X, Y)

    @property
    def tmp_shape(self):
        """Shape of the intermediate array of one batch entry."""
        return self.m_a, self.m_b, self.n_c

    def workspace_size(self, batch_count):
        """Elements of workspace needed for ``batch_count`` entries (tight packing)."""
        return _checked_product(self.m_a, self.m_b, self.n_c, batch_count)

    def entry_bytes(self, itemsize):
        """Bytes touched per batch entry (input, two intermediates, output)."""
        tmp = self.m_a * self.m_b * self.n_c
        inputs = self.n_a * self.n_b * self.n_c
        outputs = self.m_a * self.m_b * self.m_c
        return itemsize * (inputs + self.m_a * self.n_b * self.n_c + 2 * tmp + 2 * outputs)


def _expect(name, got, expected):
    if tuple(got) != tuple(expected):
        raise ValueError(f"Dimension mismatch: {name} is {got}, expected {expected}.")


def _expect_batch(X, Y):
    if X.batch_count != Y.batch_count:
        raise ValueError(
            f"Dimension mismatch: {X.batch_count} inputs for {Y.batch_count} outputs."
        )


@attr.s(frozen=True, slots=True)
class Workspace:
    """Caller-provided scratch buffer (a "work array")."""

    data = attr.ib(repr=lambda v: f"<{v.size} ({v.dtype})>", eq=False)

    @property
    def capacity(self):
        """Number of elements available."""
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @classmethod
    def empty(cls, size, dtype="float64"):
        """Allocate an uninitialized workspace of ``size`` elements."""
        return cls(np.empty(size, dtype=dtype))

    @classmethod
    def for_problem(cls, problem, batch_count, dtype="float64"):
        """Allocate the tight workspace a 3-D problem needs."""
        return cls.empty(problem.workspace_size(batch_count), dtype=dtype)


def resolve_op(op, matrix):
    """
    Materialize :math:`op(M)` as a contiguous array.

    Constant matrices are resolved once per call, so that kernels only
    ever see non-transposed operands.

    Examples
    --------
    >>> resolve_op("T", np.array([[1.0, 2.0], [3.0, 4.0]]))
    array([[1., 3.],
           [2., 4.]])

    """
    op = MatrixOp.parse(op)
    if op is MatrixOp.NoTranspose:
        return np.ascontiguousarray(matrix)
    if op is MatrixOp.ConjTranspose and np.iscomplexobj(matrix):
        return np.ascontiguousarray(matrix.conj().T)
    return np.ascontiguousarray(matrix.T)


def op_entries(op, batch):
    """Apply :math:`op(\\cdot)` to every entry of a logical ``(N, rows, cols)`` array, lazily."""
    if MatrixOp.parse(op).transposes:
        return batch.transpose(0, 2, 1)
    return batch


def pack(entries, conjugate=False):
    """Copy a (possibly strided) slice of entries into a fresh C-contiguous block."""
    packed = np.array(entries, order="C", copy=True)
    if conjugate and np.iscomplexobj(packed):
        np.conjugate(packed, out=packed)
    return packed


def store(out, result, alpha, beta):
    """
    Blend ``result`` into ``out`` as ``out ← α·result + β·out``.

    ``out`` is not read when ``β = 0``, so that uninitialized (or NaN-filled)
    outputs are safe.

    """
    if alpha != 1:
        result *= alpha
    if beta != 0:
        result += beta * out
    out[...] = result


def scale(out, beta):
    """``out ← β·out``, writing zeros (without reading) when ``β = 0``."""
    if beta == 0:
        out[...] = 0
    elif beta != 1:
        out *= beta


def default_n_jobs():
    """Number of workers used when a kernel is called without ``n_jobs``."""
    value = os.getenv("KRONBATCH_NJOBS")
    return int(value) if value else 1


def chunk_size(entry_bytes, chunk_bytes=None):
    """Entries per chunk so that one chunk's working set fits ``chunk_bytes``."""
    chunk_bytes = CHUNK_BYTES if chunk_bytes is None else chunk_bytes
    return max(1, chunk_bytes // max(entry_bytes, 1))


def _exec_chunks(func, chunks):
    for start, stop in chunks:
        func(start, stop)
    return len(chunks)


def run_batched(func, batch_count, chunk, n_jobs=None):
    """
    Execute ``func(start, stop)`` over the whole batch, chunk-by-chunk.

    The chunking depends only on ``chunk`` (never on the number of workers),
    and each worker receives a contiguous run of chunks.
    Every entry is therefore processed by exactly one worker, within the
    same chunk, regardless of ``n_jobs``.

    """
    n_jobs = n_jobs or default_n_jobs()
    chunks = list(chunk_ranges(batch_count, chunk))
    groups = worker_ranges(chunks, effective_n_jobs(n_jobs))

    LOGGER.debug(
        "Dispatching %d entries in %d chunks of <= %d over %d worker(s).",
        batch_count,
        len(chunks),
        chunk,
        len(groups),
    )

    # One single worker - linear execution
    if len(groups) <= 1:
        for group in groups:
            _exec_chunks(func, group)
        return

    # Workers write to disjoint regions of the same buffers
    with Parallel(n_jobs=len(groups), require="sharedmem") as executor:
        executor(delayed(_exec_chunks)(func, group) for group in groups)
