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
"""Throughput benchmark (GFlop/s) and verification of the batched kernels."""

import csv
import io
import logging
import sys
from functools import partial
from pathlib import Path
from time import perf_counter
from warnings import warn

import attr
import numpy as np
import psutil
from tqdm import tqdm

from kronbatch.data.batch import BatchAllocationError, batch_nbytes, generate_batch
from kronbatch.kernels import KronProblem2D, KronProblem3D, Workspace, kron2, kron3
from kronbatch.oracle import ref_kron2_apply, ref_kron3_apply
from kronbatch.utils import random_sample

LOGGER = logging.getLogger(__name__)

DEFAULT_BATCH = {"single": 100_000, "double": 50_000}
"""Default batch sizes per precision (double precision holds half the entries)."""

TOLERANCES = {"single": 1e-5, "double": 1e-12}
"""Relative (max-norm) tolerance when comparing against the oracle."""

MEMORY_FRACTION = 0.8
"""Share of the available memory one case may take when no limit is configured."""

CSV_FIELDS = ("size", "precision", "dims", "batch", "seconds", "gflops", "verified")
TABLE_COLUMNS = (
    ("single", "2d", "Single-2"),
    ("single", "3d", "Single-3"),
    ("double", "2d", "Double-2"),
    ("double", "3d", "Double-3"),
)


class VerificationError(RuntimeError):
    """Kernel results differ from the oracle beyond tolerance."""

    def __init__(self, case, max_abs, max_rel, index, tolerance):
        self.case = case
        self.max_abs = max_abs
        self.max_rel = max_rel
        self.index = index
        self.tolerance = tolerance
        super().__init__(
            f"Verification failed for {case}: max abs error {max_abs:.6g}, "
            f"max rel error {max_rel:.6g} (tolerance {tolerance:g}), "
            f"first failing element {index} (batch entry, element)."
        )


def flops_kron(size, dims):
    """
    Floating point operations of one real Kronecker action with square size-``m`` factors.

    Examples
    --------
    >>> flops_kron(10, "2d")
    4000
    >>> flops_kron(16, "3d")
    393216
    >>> flops_kron(1, "2d")
    4

    """
    if size < 1:
        raise ValueError(f"Size must be >= 1 (got {size}).")
    dims = str(dims).lower().rstrip("d")
    if dims == "2":
        return 4 * size**3
    if dims == "3":
        return 6 * size**4
    raise ValueError(f"Unsupported dimensionality <{dims}>.")


def parse_sizes(value):
    """
    Parse a list of matrix sizes (``"1..16"``, ``"2,4,8"``, or an iterable).

    Examples
    --------
    >>> parse_sizes("1..4")
    (1, 2, 3, 4)
    >>> parse_sizes("8, 2 4")
    (2, 4, 8)
    >>> parse_sizes([16, "1..2"])
    (1, 2, 16)

    """
    if isinstance(value, (int, np.integer)):
        return (int(value),)
    if isinstance(value, str):
        sizes = []
        for token in value.replace(",", " ").split():
            if ".." in token:
                low, high = token.split("..")
                sizes += range(int(low), int(high) + 1)
            else:
                sizes.append(int(token))
        return tuple(sorted(set(sizes)))
    return tuple(sorted({size for item in value for size in parse_sizes(item)}))


def _valid_sizes(instance, attribute, value):
    if not value or min(value) < 1:
        raise ValueError(f"Sizes must be a non-empty list of integers >= 1 (got {value}).")


def _positive(instance, attribute, value):
    if value is not None and value < 1:
        raise ValueError(f"{attribute.name} must be >= 1 (got {value}).")


def _optional_int(value):
    return None if value is None else int(value)


@attr.s(frozen=True, slots=True)
class BenchConfig:
    """Settings of one benchmark sweep."""

    sizes = attr.ib(default=tuple(range(1, 17)), converter=parse_sizes, validator=_valid_sizes)
    """Sizes of the square component matrices."""
    precision = attr.ib(
        default="both", validator=attr.validators.in_(("single", "double", "both"))
    )
    dims = attr.ib(default="both", validator=attr.validators.in_(("2d", "3d", "both")))
    batch_count = attr.ib(default=None, converter=_optional_int, validator=_positive)
    """Entries per batch (defaults to :data:`DEFAULT_BATCH` for each precision)."""
    repetitions = attr.ib(default=10, converter=int, validator=_positive)
    alpha = attr.ib(default=1.0, converter=float)
    beta = attr.ib(default=0.0, converter=float)
    seed = attr.ib(default=1234, converter=int)
    output_format = attr.ib(default="table", validator=attr.validators.in_(("table", "csv")))
    output = attr.ib(default=None, converter=attr.converters.optional(Path))
    """Write the report to this file (standard output if ``None``)."""
    verify_only = attr.ib(default=False, converter=bool)
    """Skip warm-up and repetitions; only time the verified invocation."""
    verify = attr.ib(default=True, converter=bool)
    baseline = attr.ib(default=False, converter=bool)
    """Also time the 2-D action computed with two unfused per-entry GEMMs."""
    n_jobs = attr.ib(default=None, converter=_optional_int)
    memory_limit = attr.ib(default=None, converter=_optional_int)
    """Largest allocation (bytes) attempted; batches are scaled down to fit."""

    @property
    def precisions(self):
        return ("single", "double") if self.precision == "both" else (self.precision,)

    @property
    def dimensions(self):
        return ("2d", "3d") if self.dims == "both" else (self.dims,)

    def batch_for(self, precision):
        return self.batch_count or DEFAULT_BATCH[precision]

    def cases(self):
        """All ``(size, precision, dims)`` combinations, in report order."""
        return [
            (size, precision, dims)
            for size in self.sizes
            for precision in self.precisions
            for dims in self.dimensions
        ]


@attr.s(frozen=True, slots=True)
class BenchRecord:
    """The measured throughput of one ``(size, precision, dims)`` combination."""

    size = attr.ib()
    precision = attr.ib()
    dims = attr.ib()
    batch_count = attr.ib()
    seconds = attr.ib()
    """Median wall-time of one kernel invocation."""
    gflops = attr.ib()
    verified = attr.ib()
    baseline_seconds = attr.ib(default=None)
    baseline_gflops = attr.ib(default=None)

    @classmethod
    def from_timing(cls, size, precision, dims, batch_count, seconds, verified, **kwargs):
        return cls(
            size,
            precision,
            dims,
            batch_count,
            seconds,
            gflops_rate(size, dims, batch_count, seconds),
            verified,
            **kwargs,
        )


def gflops_rate(size, dims, batch_count, seconds):
    """GFlop/s of ``batch_count`` Kronecker actions completed in ``seconds``."""
    return flops_kron(size, dims) * batch_count / (seconds * 1e9)


def gemm_baseline_kron2(A, B, X, Y, alpha=1.0, beta=0.0):
    """
    Compute the 2-D action with two generic GEMM calls per entry, through a temporary.

    This is the straightforward alternative to a specialized kernel, used
    as the reference point of the throughput comparison.

    """
    a = A.to_array()
    b = B.to_array()
    x_all = X.to_array()
    y_all = Y.to_array(writeable=True)
    tmp = np.empty((a.shape[1], b.shape[0]), dtype=Y.dtype)
    for p in range(len(Y)):
        np.matmul(x_all[p], b.T, out=tmp)
        result = a @ tmp
        if alpha != 1:
            result *= alpha
        if beta != 0:
            result += beta * y_all[p]
        y_all[p] = result


def _memory_limit(config):
    """Largest allocation of one case: the configured limit, else a share of available memory."""
    if config.memory_limit is not None:
        return config.memory_limit
    return int(MEMORY_FRACTION * psutil.virtual_memory().available)


def _prepare(config, size, dims, precision, limit):
    """Generate the batch and the workspace, halving the batch until they fit."""
    batch_count = config.batch_for(precision)
    while True:
        workspace = size**3 * batch_count if dims == "3d" else 0
        requested = batch_nbytes(size, dims, precision, batch_count)
        requested += workspace * (4 if precision == "single" else 8)
        try:
            if limit is not None and requested > limit:
                raise BatchAllocationError(requested, f"limit is {limit} bytes")
            batch = generate_batch(config.seed, size, dims, precision, batch_count)
            try:
                work = Workspace.empty(workspace, dtype=batch.dtype)
            except MemoryError as exc:
                raise BatchAllocationError(requested, str(exc) or None) from exc
            return batch, work
        except BatchAllocationError as exc:
            if batch_count == 1:
                raise
            batch_count = max(1, batch_count // 2)
            warn(f"{exc} Scaling the batch down to {batch_count} entries.", stacklevel=2)


def _kernel_call(batch, work, alpha, beta, n_jobs):
    if batch.ndim == 2:
        problem = KronProblem2D.from_views(batch.A, batch.B, alpha=alpha, beta=beta)
        return partial(kron2, problem, batch.A, batch.B, batch.X, batch.Y, n_jobs=n_jobs)

    problem = KronProblem3D.from_views(batch.A, batch.B, batch.C, alpha=alpha, beta=beta)
    return partial(
        kron3, problem, batch.A, batch.B, batch.C, batch.X, batch.Y, work, n_jobs=n_jobs
    )


def _timed(call):
    start = perf_counter()
    call()
    return perf_counter() - start


def time_call(call, repetitions, warmup=True):
    """Median wall-time of ``repetitions`` invocations (after one untimed warm-up)."""
    if warmup:
        call()
    return float(np.median([_timed(call) for _ in range(repetitions)]))


def reference_entry(batch, p):
    """Oracle result (double precision) of the Kronecker action on entry ``p``."""
    if batch.ndim == 2:
        return ref_kron2_apply(batch.A, batch.B, batch.X.entry(p)).to_array()
    return ref_kron3_apply(batch.A, batch.B, batch.C, batch.X.entry(p)).to_array()


def verify_entries(batch, entries, y_prior, alpha, beta):
    """
    Compare sampled outputs against the oracle.

    Parameters
    ----------
    batch : :obj:`~kronbatch.data.KronBatch`
        The batch, after the kernel has been applied.
    entries : :obj:`list` of :obj:`int`
        Indices of the sampled entries.
    y_prior : :obj:`numpy.ndarray`
        Contents of the sampled outputs before the kernel was applied.

    Raises
    ------
    :obj:`VerificationError`
        With the max abs/rel error and the first failing index.

    """
    tolerance = TOLERANCES[batch.precision]
    max_abs = max_rel = 0.0
    first = None
    for i, p in enumerate(entries):
        expected = alpha * reference_entry(batch, p)
        if beta != 0:
            expected += beta * np.asarray(y_prior[i], dtype=np.float64)
        actual = np.asarray(batch.Y.entry(p).to_array(), dtype=np.float64)
        error = np.abs(actual - expected)
        if not error.size:
            continue
        scale = max(float(np.abs(expected).max()), np.finfo(np.float64).tiny)
        max_abs = max(max_abs, float(error.max()))
        max_rel = max(max_rel, float(error.max()) / scale)
        failing = np.argwhere(~(error <= tolerance * scale))
        if first is None and len(failing):
            first = (p, tuple(int(v) for v in failing[0]))

    if first is not None:
        case = f"size={batch.size} precision={batch.precision} dims={batch.dims}"
        raise VerificationError(case, max_abs, max_rel, first, tolerance)
    return max_abs, max_rel


def bench_case(config, size, precision, dims, limit=None):
    """Generate, warm up, time, and verify one combination."""
    batch, work = _prepare(config, size, dims, precision, limit)
    call = _kernel_call(batch, work, config.alpha, config.beta, config.n_jobs)
    count = len(batch)

    seconds = None
    if not config.verify_only:
        seconds = time_call(call, config.repetitions)

    verified = False
    if config.verify or config.verify_only:
        entries = random_sample(count, 16, seed=config.seed)
        y_prior = np.array(batch.Y.to_array()[entries])
        elapsed = _timed(call)
        verify_entries(batch, entries, y_prior, config.alpha, config.beta)
        verified = True
        seconds = elapsed if seconds is None else seconds
    elif seconds is None:
        seconds = _timed(call)

    extra = {}
    if config.baseline and dims == "2d" and not config.verify_only:
        baseline_seconds = time_call(
            partial(
                gemm_baseline_kron2,
                batch.A,
                batch.B,
                batch.X,
                batch.Y,
                config.alpha,
                config.beta,
            ),
            config.repetitions,
        )
        extra = {
            "baseline_seconds": baseline_seconds,
            "baseline_gflops": gflops_rate(size, dims, count, baseline_seconds),
        }

    record = BenchRecord.from_timing(size, precision, dims, count, seconds, verified, **extra)
    LOGGER.info(
        "size=%d precision=%s dims=%s batch=%d: %.6g s, %.6g GFlop/s%s",
        size,
        precision,
        dims,
        count,
        record.seconds,
        record.gflops,
        "" if verified else " (unverified)",
    )
    return record


def run_bench(config, emit=True, progress=True):
    """
    Run the whole benchmark sweep described by ``config``.

    Parameters
    ----------
    config : :obj:`BenchConfig`
        The benchmark settings.
    emit : :obj:`bool`
        Write the report (see :func:`write_report`).
    progress : :obj:`bool`
        Show a progress bar.

    Returns
    -------
    :obj:`list` of :obj:`BenchRecord`
        One record per ``(size, precision, dims)`` combination, by ascending size.

    """
    limit = _memory_limit(config)
    cases = config.cases()
    records = []
    with tqdm(total=len(cases), unit="case", disable=not progress) as pbar:
        for size, precision, dims in cases:
            pbar.set_description_str(f"Size {size} | {precision} | {dims}")
            records.append(bench_case(config, size, precision, dims, limit=limit))
            pbar.update()

    if emit:
        write_report(records, config)
    return records


def _g(value):
    return "" if value is None else f"{value:.6g}"


def format_csv(records, baseline=False):
    """
    CSV report: one header row and one row per record.

    Examples
    --------
    >>> rec = BenchRecord.from_timing(10, "single", "2d", 1000, 0.002, True)
    >>> print(format_csv([rec]), end="")
    size,precision,dims,batch,seconds,gflops,verified
    10,single,2d,1000,0.002,2,true

    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_FIELDS + (("baseline_gflops",) if baseline else ()))
    for rec in records:
        row = [
            rec.size,
            rec.precision,
            rec.dims,
            rec.batch_count,
            _g(rec.seconds),
            _g(rec.gflops),
            "true" if rec.verified else "false",
        ]
        if baseline:
            row.append(_g(rec.baseline_gflops))
        writer.writerow(row)
    return buffer.getvalue()


def format_table(records, baseline=False):
    """
    Text report: one row per size, one column per (precision, dims), in GFlop/s.

    Unverified rates are marked with ``*``.

    Examples
    --------
    >>> recs = [
    ...     BenchRecord.from_timing(10, "single", "2d", 1000, 0.002, True),
    ...     BenchRecord.from_timing(10, "single", "3d", 1000, 0.3, False),
    ... ]
    >>> print(format_table(recs), end="")
    Size    Single-2    Single-3
      10        2.00       0.20*

    """
    cells = {(r.size, r.precision, r.dims): r for r in records}
    columns = [c for c in TABLE_COLUMNS if any(k[1:] == c[:2] for k in cells)]
    sizes = sorted({r.size for r in records})

    header = ["Size"] + [f"{label:>10}" for _, _, label in columns]
    if baseline:
        header += [f"{label + ' (GEMM)':>17}" for p, d, label in columns if d == "2d"]

    lines = ["  ".join(header)]
    for size in sizes:
        row = [f"{size:>4}"]
        for precision, dims, _ in columns:
            rec = cells.get((size, precision, dims))
            text = "" if rec is None else f"{rec.gflops:.2f}{'' if rec.verified else '*'}"
            row.append(f"{text:>10}")
        if baseline:
            for precision, dims, _ in columns:
                if dims != "2d":
                    continue
                rec = cells.get((size, precision, dims))
                value = None if rec is None else rec.baseline_gflops
                row.append(f"{'' if value is None else f'{value:.2f}':>17}")
        lines.append("  ".join(row))
    return "\n".join(lines) + "\n"


def write_report(records, config, stream=None):
    """Write the report in the configured format, to ``config.output`` or ``stream``."""
    formatter = format_csv if config.output_format == "csv" else format_table
    text = formatter(records, baseline=config.baseline)

    if config.output is not None:
        output = Path(config.output)
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(text)
        LOGGER.info("Report written to <%s>.", output)
        return text

    (stream or sys.stdout).write(text)
    return text
