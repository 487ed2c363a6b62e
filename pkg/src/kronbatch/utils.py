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
"""Iterators to traverse the entries of a batch."""

from typing import Iterator

import numpy as np


def chunk_ranges(size: int, chunk: int = 1) -> Iterator[tuple]:
    """
    Traverse the batch in ascending order, by contiguous chunks of entries.

    Parameters
    ----------
    size : :obj:`int`
        Number of entries in the batch.
    chunk : :obj:`int`
        Maximum number of entries per chunk (the last chunk may be shorter).

    Returns
    -------
    :obj:`~typing.Iterator`
        Half-open ``(start, stop)`` ranges.

    Examples
    --------
    >>> list(chunk_ranges(10, 4))
    [(0, 4), (4, 8), (8, 10)]
    >>> list(chunk_ranges(0, 4))
    []
    >>> list(chunk_ranges(3))
    [(0, 1), (1, 2), (2, 3)]

    """
    if chunk < 1:
        raise ValueError(f"Chunks must hold at least one entry (got {chunk}).")

    return ((start, min(start + chunk, size)) for start in range(0, size, chunk))


def worker_ranges(chunks, n_workers: int = 1) -> list:
    """
    Distribute a list of chunks over workers, as contiguous runs of chunks.

    Examples
    --------
    >>> worker_ranges(list(chunk_ranges(10, 2)), 2)
    [[(0, 2), (2, 4), (4, 6)], [(6, 8), (8, 10)]]
    >>> worker_ranges([(0, 3)], 4)
    [[(0, 3)]]

    """
    chunks = list(chunks)
    n_workers = max(1, min(n_workers, len(chunks)))
    groups = np.array_split(np.arange(len(chunks)), n_workers)
    return [[chunks[i] for i in group] for group in groups if len(group)]


def random_sample(size: int, count: int = 16, seed=None) -> list:
    """
    Draw a sorted random subset of batch entries (e.g., for verification).

    Parameters
    ----------
    size : :obj:`int`
        Number of entries in the batch.
    count : :obj:`int`
        Number of entries to draw (capped at ``size``).
    seed : :obj:`int` or ``None``
        Seed of NumPy's random :obj:`~numpy.random.Generator`.

    Examples
    --------
    >>> len(random_sample(100, 16, seed=1234))
    16
    >>> random_sample(5, 16, seed=0)
    [0, 1, 2, 3, 4]
    >>> random_sample(100, 8, seed=7) == random_sample(100, 8, seed=7)
    True

    """
    count = min(count, size)
    if count == size:
        return list(range(size))

    rng = np.random.default_rng(seed)
    return sorted(int(i) for i in rng.choice(size, size=count, replace=False))
