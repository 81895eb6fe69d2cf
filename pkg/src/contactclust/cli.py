"""Command-line entry point.

    contactclust pipeline --output-dir run
    contactclust ingest --output-dir run && contactclust contacts --output-dir run && ...

Settings come from the built-in defaults, then an optional YAML ``--config``
file, then command-line flags. Exit codes: 0 success, 1 validation error,
2 numerical error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .errors import InputError, NumericalError
from .pipeline import MODES, STAGES, PipelineConfig, RunManifest, run_pipeline, run_stage

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("contactclust")


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML file with PipelineConfig keys")
    common.add_argument("--output-dir", "-o", dest="output_dir")
    common.add_argument("--contacts-dir", dest="contacts_dir")
    common.add_argument("--population-file", dest="population_file")
    common.add_argument("--indicators-file", dest="indicators_file")
    common.add_argument("--countries-file", dest="countries_file")
    common.add_argument("--profile", help="parameter profile (YAML)")
    common.add_argument("--target-r0", dest="target_r0", type=float)
    common.add_argument("--partition", type=_float_list, help="lower bounds of the aggregated age bins, e.g. 0,5,15,20,25,65")
    common.add_argument("--setting-weights", dest="setting_weights", type=_float_list, help="home,school,work,other")
    common.add_argument("--calibration-bins", dest="calibration_bins", type=int, choices=(6, 16))
    common.add_argument("--aggregation-population", dest="aggregation_population",
                        help="ISO3 whose population weights the parameter aggregation, or 'own'")
    common.add_argument("--pca-k", dest="pca_k", type=int)
    common.add_argument("--twod-row-k", dest="twod_row_k", type=int)
    common.add_argument("--twod-col-k", dest="twod_col_k", type=int)
    common.add_argument("--twod-form", dest="twod_form", choices=("consistent", "as_written"))
    common.add_argument("--impute-missing", dest="impute_missing", action="store_const", const=True)
    common.add_argument("--mode", dest="modes", action="append", choices=MODES, help="repeatable; default: all modes")
    common.add_argument("--linkage", choices=("complete", "single", "average", "ward"))
    common.add_argument("--cut-height-contacts", dest="cut_height_contacts", type=float)
    common.add_argument("--cut-height-combined", dest="cut_height_combined", type=float)
    common.add_argument("--cut-height-socio", dest="cut_height_socio", type=float)
    common.add_argument("--workers", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="contactclust", description=__doc__.splitlines()[0] if __doc__ else None)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("pipeline", parents=[common], help="run every stage")
    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=f"run the '{stage}' stage only")
    return parser


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    data: dict = {}
    if args.config:
        loaded = yaml.safe_load(Path(args.config).read_text()) or {}
        if not isinstance(loaded, dict):
            raise InputError(f"{args.config}: config must be a mapping")
        data.update(loaded)
    skip = {"config", "command", "verbose"}
    data.update({k: v for k, v in vars(args).items() if k not in skip and v is not None})
    return PipelineConfig.from_mapping(data)


def _report(man: RunManifest) -> None:
    for name, info in man.stages.items():
        print(f"{name:10s} {info['status']:7s} {info.get('seconds', 0):8.3f}s")
    print(f"manifest: {man.path}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = resolve_config(args)
        if args.command == "pipeline":
            man = run_pipeline(config)
        else:
            man = run_stage(config, args.command)
        _report(man)
        return EXIT_OK
    except InputError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, yaml.YAMLError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
