"""Run the built-in LJ calculator as an external-protocol worker process.

    python -m philately.calculator.worker [--config FILE]
"""

from __future__ import annotations

import argparse

from philately.calculator.external import serve


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None)
    args = parser.parse_args(argv)
    from philately.config import load_config

    serve(load_config(args.config).build_calculator(allow_external=False))


if __name__ == "__main__":
    main()
