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
"""Synthetic batches of Kronecker problems, as used by the benchmark."""

import attr
import numpy as np

from kronbatch.layout import PRECISIONS, Array3View, BatchView, MatrixView


class BatchAllocationError(MemoryError):
    """The requested batch does not fit in memory."""

    def __init__(self, requested, reason=None):
        self.requested = requested
        message = f"Cannot allocate a batch of {requested} bytes ({requested / 2**30:.2f} GiB)"
        super().__init__(f"{message}: {reason}." if reason else f"{message}.")


def _data_repr(value):
    if value is None:
        return "None"
    shape = "x".join(str(v) for v in value.entry_shape)
    return f"<{value.batch_count} x {shape} ({value.dtype})>"


def _dims(value):
    text = str(value).lower().rstrip("d")
    if text not in ("2", "3"):
        raise ValueError(f"Unsupported dimensionality <{value}>.")
    return f"{text}d"


@attr.s(slots=True)
class KronBatch:
    """Data representation structure for one batched Kronecker problem."""

    size = attr.ib(converter=int)
    """Size of the square component matrices."""
    dims = attr.ib(converter=_dims)
    """Either ``"2d"`` or ``"3d"``."""
    precision = attr.ib()
    """Either ``"single"`` or ``"double"``."""
    A = attr.ib(default=None, repr=False)
    """The first component matrix (:obj:`~kronbatch.layout.MatrixView`)."""
    B = attr.ib(default=None, repr=False)
    """The second component matrix."""
    C = attr.ib(default=None, repr=False)
    """The third component matrix (``None`` in 2-D)."""
    X = attr.ib(default=None, repr=_data_repr)
    """The batch of inputs (:obj:`~kronbatch.layout.BatchView`)."""
    Y = attr.ib(default=None, repr=_data_repr)
    """The batch of outputs (:obj:`~kronbatch.layout.BatchView`)."""
    seed = attr.ib(default=None)
    """The seed the batch was generated from."""

    def __len__(self):
        """Obtain the number of entries in the batch."""
        return 0 if self.X is None else self.X.batch_count

    @property
    def dtype(self):
        return PRECISIONS[self.precision]

    @property
    def ndim(self):
        return int(self.dims[0])

    @property
    def matrices(self):
        """The component matrices in use."""
        return (self.A, self.B) if self.ndim == 2 else (self.A, self.B, self.C)

    @property
    def nbytes(self):
        return sum(v.data.nbytes for v in (*self.matrices, self.X, self.Y))


def batch_nbytes(size, dims, precision, batch_count):
    """
    Bytes required by a generated batch (component matrices, X and Y).

    Examples
    --------
    >>> batch_nbytes(16, "3d", "single", 100000)
    3276803072

    """
    ndim = int(_dims(dims)[0])
    entry = size**ndim
    return PRECISIONS[precision].itemsize * (ndim * size * size + 2 * entry * batch_count)


def _uniform(rng, count, dtype):
    values = np.empty(count, dtype=dtype)
    rng.random(out=values, dtype=dtype)
    values *= 2
    values -= 1
    return values


def generate_batch(seed, size, dims, precision, batch_count, memory_limit=None):
    """
    Generate a deterministic, pseudo-random batched problem.

    All values are drawn uniformly in :math:`[-1, 1)` from NumPy's random
    :obj:`~numpy.random.Generator`, in the order ``A, B, [C,] X, Y``.
    All leading dimensions and strides are the smallest possible.

    Parameters
    ----------
    seed : :obj:`int`
        Seed of the random number generator; the same seed (and parameters)
        always produces bit-identical buffers.
    size : :obj:`int`
        Size of the square component matrices.
    dims : :obj:`str`
        ``"2d"`` or ``"3d"``.
    precision : :obj:`str`
        ``"single"`` or ``"double"``.
    batch_count : :obj:`int`
        Number of entries.
    memory_limit : :obj:`int`, optional
        Refuse to allocate batches larger than this many bytes.

    Returns
    -------
    :obj:`KronBatch`
        The generated problem.

    Raises
    ------
    :obj:`BatchAllocationError`
        When the batch does not fit in memory (reporting the requested bytes).

    Examples
    --------
    >>> batch = generate_batch(1234, 4, "2d", "double", 10)
    >>> len(batch), batch.X.to_array().shape
    (10, (10, 4, 4))
    >>> bool(np.all(np.abs(batch.X.data) <= 1.0))
    True
    >>> len(generate_batch(1234, 4, "3d", "single", 0))
    0

    """
    if precision not in PRECISIONS:
        raise ValueError(f"Unsupported precision <{precision}>.")
    dims = _dims(dims)
    ndim = int(dims[0])
    dtype = PRECISIONS[precision]

    requested = batch_nbytes(size, dims, precision, batch_count)
    if memory_limit is not None and requested > memory_limit:
        raise BatchAllocationError(requested, f"limit is {memory_limit} bytes")

    rng = np.random.default_rng(seed)
    try:
        matrices = [
            MatrixView(_uniform(rng, size * size, dtype), size, size) for _ in range(ndim)
        ]
        entry = size**ndim
        x_data = _uniform(rng, entry * batch_count, dtype)
        y_data = _uniform(rng, entry * batch_count, dtype)
    except MemoryError as exc:
        raise BatchAllocationError(requested, str(exc) or None) from exc

    if ndim == 2:
        x_base = MatrixView(x_data, size, size)
        y_base = MatrixView(y_data, size, size)
    else:
        x_base = Array3View(x_data, size, size, size)
        y_base = Array3View(y_data, size, size, size)

    return KronBatch(
        size,
        dims,
        precision,
        *matrices,
        *((None,) if ndim == 2 else ()),
        X=BatchView(x_base, batch_count),
        Y=BatchView(y_base, batch_count),
        seed=seed,
    )
