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
"""Unit tests exercising the batch iterators."""

import pytest

from kronbatch.utils import chunk_ranges, random_sample, worker_ranges


@pytest.mark.parametrize(
    ("size", "chunk", "expected"),
    [
        (10, 4, [(0, 4), (4, 8), (8, 10)]),
        (8, 4, [(0, 4), (4, 8)]),
        (3, 10, [(0, 3)]),
        (0, 4, []),
        (2, 1, [(0, 1), (1, 2)]),
    ],
)
def test_chunk_ranges(size, chunk, expected):
    assert list(chunk_ranges(size, chunk)) == expected


def test_chunk_ranges_errors():
    with pytest.raises(ValueError, match="at least one entry"):
        list(chunk_ranges(10, 0))
    # The number of entries is always explicit
    with pytest.raises(TypeError):
        chunk_ranges(chunk=4, batch=list(range(10)))


@pytest.mark.parametrize("n_workers", (1, 2, 3, 7, 50))
def test_worker_ranges_cover_chunks(n_workers):
    chunks = list(chunk_ranges(100, 7))
    groups = worker_ranges(chunks, n_workers)
    assert len(groups) == min(n_workers, len(chunks))
    assert [c for group in groups for c in group] == chunks
    assert all(group for group in groups)


def test_worker_ranges_chunking_independent_of_workers():
    chunks = list(chunk_ranges(1000, 64))
    for n_workers in (1, 2, 4, 8):
        flat = [c for group in worker_ranges(chunks, n_workers) for c in group]
        assert flat == chunks


def test_random_sample():
    entries = random_sample(1000, 16, seed=1234)
    assert len(entries) == 16
    assert entries == sorted(set(entries))
    assert all(0 <= p < 1000 for p in entries)
    assert random_sample(1000, 16, seed=1234) == entries
    assert random_sample(4, 16, seed=1) == [0, 1, 2, 3]
    assert random_sample(0, 16) == []
    with pytest.raises(TypeError):
        random_sample(count=4, batch=list(range(10)))
