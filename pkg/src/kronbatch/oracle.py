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
Brute-force reference implementations (the ground truth for all kernels).

These routines explicitly form Kronecker product matrices and evaluate
the defining sums literally, always in double precision (``complex128``
for complex inputs).
They are meant for testing and verification on small sizes only.

"""

import attr
import numpy as np

from kronbatch.layout import Array3View, MatrixOp, MatrixView, op_dims

_INDEX_MAX = np.iinfo(np.int64).max


def _data_repr(value):
    return f"<{value.size} ({value.dtype})>"


@attr.s(slots=True, eq=False)
class DenseMatrix:
    """An owned, tightly packed (``ld = rows``) column-major matrix."""

    data = attr.ib(repr=_data_repr)
    rows = attr.ib(converter=int)
    cols = attr.ib(converter=int)

    def __attrs_post_init__(self):
        if self.data.size != self.rows * self.cols:
            raise ValueError(
                f"Storage holds {self.data.size} elements, "
                f"expected {self.rows} x {self.cols}."
            )

    @property
    def shape(self):
        return self.rows, self.cols

    @property
    def dtype(self):
        return self.data.dtype

    @classmethod
    def from_array(cls, array):
        array = np.asanyarray(array)
        return cls(array.ravel(order="F"), *array.shape)

    def to_array(self, writeable=True):
        """The logical ``(rows, cols)`` array (a view of the storage)."""
        return self.data.reshape((self.rows, self.cols), order="F")

    def as_view(self):
        """A :obj:`~kronbatch.layout.MatrixView` over the storage."""
        return MatrixView(self.data, self.rows, self.cols)


@attr.s(slots=True, eq=False)
class DenseArray3:
    """An owned, tightly packed column-major 3-D array."""

    data = attr.ib(repr=_data_repr)
    dim1 = attr.ib(converter=int)
    dim2 = attr.ib(converter=int)
    dim3 = attr.ib(converter=int)

    def __attrs_post_init__(self):
        if self.data.size != self.dim1 * self.dim2 * self.dim3:
            raise ValueError(f"Storage holds {self.data.size} elements, expected {self.shape}.")

    @property
    def shape(self):
        return self.dim1, self.dim2, self.dim3

    @classmethod
    def from_array(cls, array):
        array = np.asanyarray(array)
        return cls(array.ravel(order="F"), *array.shape)

    def to_array(self):
        """The logical ``(dim1, dim2, dim3)`` array (a view of the storage)."""
        return self.data.reshape(self.shape, order="F")

    def as_view(self):
        """An :obj:`~kronbatch.layout.Array3View` over the storage."""
        return Array3View(self.data, *self.shape)


def _double(view):
    array = view.to_array() if hasattr(view, "to_array") else np.asanyarray(view)
    dtype = np.complex128 if np.iscomplexobj(array) else np.float64
    return np.array(array, dtype=dtype)


def _op(op, array):
    op = MatrixOp.parse(op)
    if op is MatrixOp.NoTranspose:
        return array
    if op is MatrixOp.ConjTranspose:
        return array.conj().T
    return array.T


def kron_matrix(A, B):
    """
    Form the explicit Kronecker product :math:`A \\otimes B`.

    Block :math:`(i, j)` of the result is :math:`A_{ij} B`.

    Examples
    --------
    >>> A = MatrixView.from_array([[1.0, 2.0], [3.0, 4.0]])
    >>> kron_matrix(A, MatrixView.from_array(np.eye(2))).to_array().tolist()
    [[1.0, 0.0, 2.0, 0.0], [0.0, 1.0, 0.0, 2.0], [3.0, 0.0, 4.0, 0.0], [0.0, 3.0, 0.0, 4.0]]
    >>> kron_matrix(MatrixView.from_array([[2.0]]), MatrixView.from_array([[3.0]])).data
    array([6.])

    """
    rows = A.rows * B.rows
    cols = A.cols * B.cols
    if rows * cols > _INDEX_MAX:
        raise OverflowError(f"A {rows} x {cols} Kronecker product overflows int64.")
    return DenseMatrix.from_array(np.kron(_double(A), _double(B)))


def vec2(X):
    """
    Column-major vectorization of a matrix.

    Examples
    --------
    >>> vec2(MatrixView.from_array([[1.0, 3.0], [2.0, 4.0]])).tolist()
    [1.0, 2.0, 3.0, 4.0]

    """
    return np.array(X.to_array()).ravel(order="F")


def vec3(X):
    """
    Column-major vectorization of a 3-D array (padding skipped).

    Examples
    --------
    >>> X = Array3View.from_array([[[1.0, 3.0]], [[2.0, 4.0]]], ld=3)
    >>> vec3(X).tolist()
    [1.0, 2.0, 3.0, 4.0]

    """
    return np.array(X.to_array()).ravel(order="F")


def ref_kron2_apply(A, B, X):
    """
    Evaluate :math:`Y_{ij} = \\sum_l \\sum_m A_{il} B_{jm} X_{lm}` literally.

    Examples
    --------
    >>> ones = MatrixView.from_array([[1.0, 1.0]])
    >>> X = MatrixView.from_array([[1.0, 2.0], [3.0, 4.0]])
    >>> ref_kron2_apply(ones, ones, X).to_array().tolist()
    [[10.0]]

    """
    if A.cols != X.rows or B.cols != X.cols:
        raise ValueError(
            f"Dimension mismatch: A is {A.shape}, B is {B.shape}, X is {X.shape}."
        )
    y = np.einsum("il,jm,lm->ij", _double(A), _double(B), _double(X), optimize=False)
    return DenseMatrix.from_array(y)


def ref_kron3_apply(A, B, C, X):
    """
    Evaluate :math:`Y_{ijk} = \\sum_l \\sum_m \\sum_n A_{il} B_{jm} C_{kn} X_{lmn}` literally.

    Examples
    --------
    >>> ones = MatrixView.from_array([[1.0, 1.0]])
    >>> X = Array3View.from_array(np.arange(8.0).reshape(2, 2, 2))
    >>> ref_kron3_apply(ones, ones, ones, X).data
    array([28.])

    """
    if A.cols != X.dim1 or B.cols != X.dim2 or C.cols != X.dim3:
        raise ValueError(
            f"Dimension mismatch: A is {A.shape}, B is {B.shape}, C is {C.shape}, "
            f"X is {X.shape}."
        )
    y = np.einsum(
        "il,jm,kn,lmn->ijk",
        _double(A),
        _double(B),
        _double(C),
        _double(X),
        optimize=False,
    )
    return DenseArray3.from_array(y)


def ref_gemm(op_a, op_b, alpha, A, B, beta, C):
    """
    Update ``C`` in place with :math:`C \\gets \\alpha\\, op(A)\\, op(B) + \\beta C`.

    The product is evaluated by a literal triple loop in double precision.
    ``A`` and ``B`` are not read when :math:`\\alpha = 0`, and ``C`` is not read
    when :math:`\\beta = 0`.

    Examples
    --------
    >>> A = MatrixView.from_array([[1.0, 2.0], [3.0, 4.0]])
    >>> C = MatrixView.from_array(np.full((2, 2), np.nan))
    >>> ref_gemm("T", "N", 1.0, A, MatrixView.from_array(np.eye(2)), 0.0, C)
    >>> C.to_array().tolist()
    [[1.0, 3.0], [2.0, 4.0]]

    """
    m, k = op_dims(op_a, A.rows, A.cols)
    k_b, n = op_dims(op_b, B.rows, B.cols)
    if k != k_b or (C.rows, C.cols) != (m, n):
        raise ValueError(
            f"Dimension mismatch: op(A) is {m} x {k}, op(B) is {k_b} x {n}, C is {C.shape}."
        )

    c = C.to_array(writeable=True)
    result = np.zeros((m, n), dtype=np.result_type(c.dtype, A.dtype, B.dtype, np.float64))
    if alpha != 0:
        result += alpha * np.einsum(
            "ik,kj->ij", _op(op_a, _double(A)), _op(op_b, _double(B)), optimize=False
        )
    if beta != 0:
        result += beta * c
    c[...] = result
