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
"""kronbatch runner."""

import logging
import sys
from typing import Optional

from kronbatch.bench import VerificationError, run_bench
from kronbatch.cli.parser import _build_parser, build_config, parse_args
from kronbatch.data.batch import BatchAllocationError


def main(argv: Optional[list] = None) -> None:
    """
    Entry point.

    Returns
    -------
    None
    """
    args = parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s | %(name)s | %(levelname)s | %(message)s",
    )

    try:
        config = build_config(args)
    except (TypeError, ValueError) as exc:
        _build_parser().error(str(exc))

    try:
        run_bench(config)
    except (VerificationError, BatchAllocationError) as exc:
        print(f"kronbatch: error: {exc}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
