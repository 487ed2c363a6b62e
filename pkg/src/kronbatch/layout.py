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
Column-major, strided views over flat element buffers.

All views are thin descriptors: they never own nor copy data, they only
describe where the elements of a matrix, a 3-D array, or a uniformly strided
batch of them live within a caller-provided, one-dimensional buffer.
Indexing is 0-based throughout. Element ``(i, j)`` of a :class:`MatrixView`
lives at ``offset + i + j * ld``, and element ``(i, j, k)`` of an
:class:`Array3View` at ``offset + i + j * ld + k * ld2``.

"""

from enum import Enum

import attr
import numpy as np
from numpy.lib.stride_tricks import as_strided

ELEMENT_TYPES = (np.dtype("float32"), np.dtype("float64"), np.dtype("complex128"))
"""Element types accepted by views and kernels (``complex128`` is optional)."""

PRECISIONS = {"single": np.dtype("float32"), "double": np.dtype("float64")}


class LayoutError(ValueError):
    """A view descriptor violates one of its stride or bound invariants."""


class MatrixOp(str, Enum):
    """The :math:`op(\\cdot)` mapping applied to a stored matrix (BLAS ``trans``)."""

    NoTranspose = "N"
    Transpose = "T"
    ConjTranspose = "C"

    @classmethod
    def parse(cls, value):
        """
        Convert BLAS-style character codes (and names) into a :class:`MatrixOp`.

        Examples
        --------
        >>> MatrixOp.parse("t")
        <MatrixOp.Transpose: 'T'>
        >>> MatrixOp.parse("ConjTranspose")
        <MatrixOp.ConjTranspose: 'C'>
        >>> MatrixOp.parse(MatrixOp.NoTranspose)
        <MatrixOp.NoTranspose: 'N'>

        """
        if isinstance(value, cls):
            return value

        text = str(value).strip()
        for member in cls:
            if text.upper() == member.value or text.lower() == member.name.lower():
                return member

        raise ValueError(f"Unsupported matrix operation <{value}>.")

    @property
    def transposes(self):
        """Whether the operation swaps rows and columns."""
        return self is not MatrixOp.NoTranspose


def op_dims(op, stored_rows, stored_cols):
    """
    Dimensions of :math:`op(M)` given the stored dimensions of :math:`M`.

    Examples
    --------
    >>> op_dims(MatrixOp.NoTranspose, 3, 5)
    (3, 5)
    >>> op_dims("T", 3, 5)
    (5, 3)
    >>> op_dims(MatrixOp.ConjTranspose, 4, 4)
    (4, 4)

    """
    if MatrixOp.parse(op).transposes:
        return stored_cols, stored_rows
    return stored_rows, stored_cols


def _data_repr(value):
    if value is None:
        return "None"
    return f"<{value.size} ({value.dtype})>"


def _check_count(name, value):
    if value < 0:
        raise LayoutError(f"{name} must be non-negative (got {value})")


def _check_buffer(data, needed, writeable=False):
    if not isinstance(data, np.ndarray):
        raise LayoutError(f"buffer must be a numpy array (got {type(data).__name__})")
    if data.ndim != 1 or not data.flags.c_contiguous:
        raise LayoutError("buffer must be a flat, contiguous array")
    if data.dtype not in ELEMENT_TYPES:
        raise LayoutError(f"unsupported element type <{data.dtype}>")
    if writeable and not data.flags.writeable:
        raise LayoutError("output buffer is read-only")
    if needed is not None and data.size < needed:
        raise LayoutError(f"buffer too short ({data.size} < {needed} elements)")


def _strided(data, offset, shape, strides, writeable):
    itemsize = data.itemsize
    return as_strided(
        data[offset:],
        shape=shape,
        strides=tuple(s * itemsize for s in strides),
        writeable=writeable,
    )


@attr.s(frozen=True, slots=True)
class MatrixView:
    """A column-major matrix with leading dimension ``ld`` (BLAS ``const T* A, int lda``)."""

    data = attr.ib(repr=_data_repr, eq=False)
    """Flat element buffer."""
    rows = attr.ib(converter=int)
    cols = attr.ib(converter=int)
    ld = attr.ib(
        default=attr.Factory(lambda self: max(self.rows, 1), takes_self=True),
        converter=int,
    )
    """Number of elements between the starts of two adjacent columns."""
    offset = attr.ib(default=0, converter=int)
    """Position of element ``(0, 0)`` within :attr:`data`."""

    ndim = 2

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def shape(self):
        return self.rows, self.cols

    @property
    def footprint(self):
        """Elements spanned by the matrix, padding included."""
        return self.ld * self.cols

    def validate(self, writeable=False, check_bounds=True):
        """Raise :obj:`LayoutError` on the first violated invariant."""
        _check_count("rows", self.rows)
        _check_count("cols", self.cols)
        _check_count("offset", self.offset)
        if self.ld < max(self.rows, 1):
            raise LayoutError(f"ld < max(rows, 1) ({self.ld} < {max(self.rows, 1)})")
        needed = self.offset + self.footprint if check_bounds and self.cols else None
        _check_buffer(self.data, needed, writeable=writeable)

    def to_array(self, writeable=False):
        """Return the logical ``(rows, cols)`` array as a strided view of the buffer."""
        return _strided(self.data, self.offset, self.shape, (1, self.ld), writeable)

    def element(self, index):
        """Element ``(i, j)`` (mostly useful for testing)."""
        i, j = index
        return self.data[self.offset + i + j * self.ld]

    @classmethod
    def from_array(cls, array, ld=None, offset=0, dtype=None, fill=0):
        """
        Store a 2-D array into a fresh column-major buffer.

        Examples
        --------
        >>> view = MatrixView.from_array(np.array([[1.0, 2.0], [3.0, 4.0]]), ld=3)
        >>> view.data.tolist()
        [1.0, 3.0, 0.0, 2.0, 4.0, 0.0]
        >>> float(view.element((0, 1)))
        2.0

        """
        array = np.asanyarray(array, dtype=dtype)
        if array.ndim != 2:
            raise ValueError(f"Expected a 2-D array, got {array.ndim} dimensions.")
        rows, cols = array.shape
        ld = max(rows, 1) if ld is None else ld
        data = np.full(offset + ld * cols, fill, dtype=array.dtype)
        view = cls(data, rows, cols, ld=ld, offset=offset)
        view.validate()
        view.to_array(writeable=True)[...] = array
        return view


@attr.s(frozen=True, slots=True)
class Array3View:
    """A column-major 3-D array with column stride ``ld`` and plane stride ``ld2``."""

    data = attr.ib(repr=_data_repr, eq=False)
    """Flat element buffer."""
    dim1 = attr.ib(converter=int)
    dim2 = attr.ib(converter=int)
    dim3 = attr.ib(converter=int)
    ld = attr.ib(
        default=attr.Factory(lambda self: max(self.dim1, 1), takes_self=True),
        converter=int,
    )
    """Number of elements between the starts of two adjacent columns."""
    ld2 = attr.ib(
        default=attr.Factory(lambda self: self.ld * self.dim2, takes_self=True),
        converter=int,
    )
    """Number of elements between the starts of two adjacent planes."""
    offset = attr.ib(default=0, converter=int)
    """Position of element ``(0, 0, 0)`` within :attr:`data`."""

    ndim = 3

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def shape(self):
        return self.dim1, self.dim2, self.dim3

    @property
    def footprint(self):
        """Elements spanned by the array, padding included."""
        return self.ld2 * self.dim3

    def validate(self, writeable=False, check_bounds=True):
        """Raise :obj:`LayoutError` on the first violated invariant."""
        _check_count("dim1", self.dim1)
        _check_count("dim2", self.dim2)
        _check_count("dim3", self.dim3)
        _check_count("offset", self.offset)
        if self.ld < max(self.dim1, 1):
            raise LayoutError(f"ld < max(dim1, 1) ({self.ld} < {max(self.dim1, 1)})")
        if self.ld2 < self.ld * self.dim2:
            raise LayoutError(f"ld2 < ld·dim2 ({self.ld2} < {self.ld * self.dim2})")
        needed = self.offset + self.footprint if check_bounds and self.dim3 else None
        _check_buffer(self.data, needed, writeable=writeable)

    def to_array(self, writeable=False):
        """Return the logical ``(dim1, dim2, dim3)`` array as a strided view of the buffer."""
        return _strided(self.data, self.offset, self.shape, (1, self.ld, self.ld2), writeable)

    def plane(self, k):
        """Plane ``k`` as a zero-copy :class:`MatrixView`."""
        return MatrixView(
            self.data, self.dim1, self.dim2, ld=self.ld, offset=self.offset + k * self.ld2
        )

    def element(self, index):
        """Element ``(i, j, k)`` (mostly useful for testing)."""
        i, j, k = index
        return self.data[self.offset + i + j * self.ld + k * self.ld2]

    @classmethod
    def from_array(cls, array, ld=None, ld2=None, offset=0, dtype=None, fill=0):
        """
        Store a 3-D array into a fresh column-major buffer.

        Examples
        --------
        >>> view = Array3View.from_array(np.arange(4.0).reshape(2, 1, 2))
        >>> view.data.tolist()
        [0.0, 2.0, 1.0, 3.0]

        """
        array = np.asanyarray(array, dtype=dtype)
        if array.ndim != 3:
            raise ValueError(f"Expected a 3-D array, got {array.ndim} dimensions.")
        dim1, dim2, dim3 = array.shape
        ld = max(dim1, 1) if ld is None else ld
        ld2 = ld * dim2 if ld2 is None else ld2
        data = np.full(offset + ld2 * dim3, fill, dtype=array.dtype)
        view = cls(data, dim1, dim2, dim3, ld=ld, ld2=ld2, offset=offset)
        view.validate()
        view.to_array(writeable=True)[...] = array
        return view


@attr.s(frozen=True, slots=True)
class BatchView:
    """
    A uniformly strided sequence of matrices or 3-D arrays.

    ``base`` describes entry 0; entry ``p`` is ``base`` shifted by
    ``p * batch_stride`` elements (the ``ldxp``/``ldyp``/``lda2``/``ldc2``
    parameters of the batched interfaces).
    Output ("mutable") batches are regular batch views over a writeable buffer.

    """

    base = attr.ib()
    batch_count = attr.ib(converter=int)
    batch_stride = attr.ib(
        default=attr.Factory(lambda self: self.base.footprint, takes_self=True),
        converter=int,
    )

    @property
    def data(self):
        return self.base.data

    @property
    def dtype(self):
        return self.base.dtype

    @property
    def ndim(self):
        return self.base.ndim

    @property
    def entry_shape(self):
        return self.base.shape

    def __len__(self):
        return self.batch_count

    def entry(self, p):
        """Entry ``p`` as a zero-copy view of the same kind as :attr:`base`."""
        if not 0 <= p < self.batch_count:
            raise IndexError(f"Batch entry {p} out of range [0, {self.batch_count}).")
        return attr.evolve(self.base, offset=self.base.offset + p * self.batch_stride)

    def validate(self, writeable=False):
        """Raise :obj:`LayoutError` on the first violated invariant."""
        _check_count("batch_count", self.batch_count)
        _check_count("batch_stride", self.batch_stride)
        self.base.validate(writeable=writeable, check_bounds=False)
        if self.batch_stride < self.base.footprint:
            raise LayoutError(
                f"batch_stride < entry footprint ({self.batch_stride} < {self.base.footprint})"
            )
        if self.batch_count:
            needed = (
                self.base.offset
                + (self.batch_count - 1) * self.batch_stride
                + self.base.footprint
            )
            _check_buffer(self.data, needed)

    def to_array(self, writeable=False):
        """Return the logical ``(N, ...)`` array as a strided view of the buffer."""
        strides = (1, self.base.ld) if self.ndim == 2 else (1, self.base.ld, self.base.ld2)
        return _strided(
            self.data,
            self.base.offset,
            (self.batch_count, *self.entry_shape),
            (self.batch_stride, *strides),
            writeable,
        )

    @classmethod
    def from_arrays(
        cls,
        stack,
        ld=None,
        ld2=None,
        batch_stride=None,
        offset=0,
        dtype=None,
        fill=0,
    ):
        """
        Store a stack of ``N`` 2-D (``(N, rows, cols)``) or 3-D arrays into a fresh buffer.

        Padding elements (beyond the logical extents) are set to ``fill``.

        Examples
        --------
        >>> batch = BatchView.from_arrays(np.ones((3, 2, 2)), batch_stride=5)
        >>> batch.data.tolist()
        [1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0]
        >>> batch.entry(1).offset
        5

        """
        stack = np.asanyarray(stack, dtype=dtype)
        if stack.ndim not in (3, 4):
            raise ValueError(f"Expected a stack of 2-D or 3-D arrays, got {stack.ndim} dims.")

        count, *shape = stack.shape
        ld = max(shape[0], 1) if ld is None else ld
        if stack.ndim == 3:
            base = MatrixView(np.empty(0, stack.dtype), *shape, ld=ld, offset=offset)
        else:
            ld2 = ld * shape[1] if ld2 is None else ld2
            base = Array3View(np.empty(0, stack.dtype), *shape, ld=ld, ld2=ld2, offset=offset)

        batch_stride = base.footprint if batch_stride is None else batch_stride
        size = offset + (max(count - 1, 0) * batch_stride + base.footprint if count else 0)
        batch = cls(
            attr.evolve(base, data=np.full(size, fill, dtype=stack.dtype)),
            count,
            batch_stride=batch_stride,
        )
        batch.validate(writeable=True)
        batch.to_array(writeable=True)[...] = stack
        return batch


def validate_batch(view, writeable=False):
    """
    Check every layout invariant of a batch view.

    Parameters
    ----------
    view : :obj:`BatchView`
        The batch descriptor to check.
    writeable : :obj:`bool`
        Also require the underlying buffer to accept writes (output batches).

    Raises
    ------
    :obj:`LayoutError`
        Reporting the first violated invariant (which stride, which bound).

    Examples
    --------
    >>> base = MatrixView(np.zeros(160), 4, 4, ld=4)
    >>> validate_batch(BatchView(base, 10, batch_stride=16))
    >>> validate_batch(BatchView(base, 10, batch_stride=15))
    Traceback (most recent call last):
    ...
    kronbatch.layout.LayoutError: batch_stride < entry footprint (15 < 16)
    >>> cube = Array3View(np.zeros(100), 3, 3, 1, ld=4, ld2=11)
    >>> validate_batch(BatchView(cube, 1))
    Traceback (most recent call last):
    ...
    kronbatch.layout.LayoutError: ld2 < ld·dim2 (11 < 12)

    """
    if not isinstance(view, BatchView):
        raise LayoutError(f"expected a BatchView (got {type(view).__name__})")
    view.validate(writeable=writeable)


def check_element_types(*views):
    """All buffers taking part in one kernel call must share a single element type."""
    dtypes = {np.dtype(v.dtype) for v in views if v is not None}
    if len(dtypes) > 1:
        raise LayoutError(
            "element type mismatch: " + ", ".join(sorted(str(d) for d in dtypes))
        )
    return dtypes.pop()
