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
"""Parser module."""

from argparse import ArgumentDefaultsHelpFormatter, ArgumentParser, Namespace
from importlib.resources import files
from pathlib import Path
from typing import Optional

import attr
import yaml

from kronbatch.bench import BenchConfig, parse_sizes


def _parse_yaml_config(file_path: str) -> dict:
    """
    Parse YAML configuration file.

    Parameters
    ----------
    file_path : str
        Path to the YAML configuration file, or the name of a configuration
        shipped with the package (e.g., ``table1``).

    Returns
    -------
    dict
        A dictionary containing the parsed YAML configuration.
    """
    path = Path(file_path)
    if not path.exists():
        packaged = files("kronbatch") / "config" / f"{path.stem}.yaml"
        if not packaged.is_file():
            raise ValueError(f"Configuration file <{file_path}> not found.")
        path = packaged

    with path.open("r") as file:
        config = yaml.safe_load(file) or {}

    if not isinstance(config, dict):
        raise ValueError(f"Configuration file <{file_path}> must contain a mapping.")

    unknown = sorted(set(config) - set(attr.fields_dict(BenchConfig)))
    if unknown:
        raise ValueError(f"Unknown configuration keys: {', '.join(unknown)}.")
    return config


def _parse_sizes(value: str) -> tuple:
    return parse_sizes(value)


def _build_parser() -> ArgumentParser:
    """
    Build parser object.

    Returns
    -------
    :obj:`~argparse.ArgumentParser`
        The parser object defining the interface for the command-line.
    """
    parser = ArgumentParser(
        description="Throughput benchmark and verification of batched Kronecker-product "
        "actions on small dense matrices.",
        formatter_class=ArgumentDefaultsHelpFormatter,
    )

    parser.add_argument(
        "--config",
        action="store",
        type=_parse_yaml_config,
        default=None,
        help="Path to a YAML file (or name of a packaged configuration, e.g., 'table1') "
        "holding benchmark settings. Command-line flags take precedence.",
    )
    parser.add_argument(
        "--sizes",
        action="store",
        type=_parse_sizes,
        default="1..16",
        help="Sizes of the square component matrices, as a range ('1..16') or a list "
        "('2,4,8').",
    )
    parser.add_argument(
        "--precision",
        action="store",
        choices=("single", "double", "both"),
        default="both",
        help="Floating point precision.",
    )
    parser.add_argument(
        "--dims",
        action="store",
        choices=("2d", "3d", "both"),
        default="both",
        help="Number of Kronecker factors.",
    )
    parser.add_argument(
        "--batch",
        dest="batch_count",
        action="store",
        type=int,
        default=None,
        help="Number of entries in each batch (100000 in single and 50000 in double "
        "precision if not given).",
    )
    parser.add_argument(
        "--reps",
        dest="repetitions",
        action="store",
        type=int,
        default=10,
        help="Number of timed kernel invocations (the median is reported).",
    )
    parser.add_argument("--alpha", action="store", type=float, default=1.0, help="Scalar α.")
    parser.add_argument("--beta", action="store", type=float, default=0.0, help="Scalar β.")
    parser.add_argument(
        "--seed",
        action="store",
        type=int,
        default=1234,
        help="Seed the random number generator for deterministic batches.",
    )
    parser.add_argument(
        "--format",
        dest="output_format",
        action="store",
        choices=("table", "csv"),
        default="table",
        help="Format of the report.",
    )
    parser.add_argument(
        "--out",
        dest="output",
        action="store",
        type=Path,
        default=None,
        help="Write the report to this file instead of the standard output.",
    )
    parser.add_argument(
        "--verify-only",
        dest="verify_only",
        action="store_true",
        default=False,
        help="Only run (and time) the verified invocation of each kernel.",
    )
    parser.add_argument(
        "--no-verify",
        dest="verify",
        action="store_false",
        default=True,
        help="Skip the comparison against the oracle (rates are marked as unverified).",
    )
    parser.add_argument(
        "--baseline",
        action="store_true",
        default=False,
        help="Also time the 2-D action computed with two generic GEMM calls per entry.",
    )
    parser.add_argument(
        "--njobs",
        dest="n_jobs",
        action="store",
        type=int,
        default=None,
        help="Number of parallel jobs of the kernels (KRONBATCH_NJOBS if not given).",
    )
    parser.add_argument(
        "--max-memory",
        dest="memory_limit",
        action="store",
        type=int,
        default=None,
        help="Maximum size (bytes) of a generated batch; larger batches are scaled down.",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        default=False,
        help="Increase log verbosity to debug messages.",
    )

    return parser


def parse_args(args: Optional[list] = None, namespace: Optional[Namespace] = None) -> Namespace:
    """
    Parse args and run further checks on the command line.

    Settings found in the ``--config`` file become the defaults of the
    parser, so that flags given explicitly on the command line override them.

    Parameters
    ----------
    args : list of str, optional
        List of strings representing the command line arguments. Defaults to None.
    namespace : :class:`~argparse.Namespace`, optional
        An object to parse the arguments into. Defaults to None.

    Returns
    -------
    :class:`~argparse.Namespace`
        An object holding the parsed arguments.
    """
    parser = _build_parser()
    opts = parser.parse_args(args)
    if opts.config:
        parser.set_defaults(**opts.config)
    return parser.parse_args(args, namespace)


def build_config(opts: Namespace) -> BenchConfig:
    """Create the :obj:`~kronbatch.bench.BenchConfig` of the parsed arguments."""
    fields = attr.fields_dict(BenchConfig)
    return BenchConfig(**{key: value for key, value in vars(opts).items() if key in fields})
