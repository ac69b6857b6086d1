from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Sequence

from langdiv import __version__
from langdiv.commands import HANDLERS
from langdiv.services.config import RunConfig
from langdiv.services.errors import LangDivError, UsageError
from langdiv.services.pipeline import MODEL_PRESETS
from langdiv.tools.catchment import LEVELS

LOGGER = logging.getLogger("langdiv")

LOG_FORMAT = "%(asctime)s | %(levelname)s | %(message)s"
INTERNAL_EXIT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="TOML config file ([run] and [exclusions] tables)")
    common.add_argument("--out-dir", dest="out_dir", default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker processes")
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)
    return common


def _add_prediction_inputs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--predictions-a", dest="predictions_a")
    parser.add_argument("--predictions-b", dest="predictions_b")


def _add_point_inputs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--points", help="points CSV (name,region,island,urban_rural,lat,lon) or name,region list")
    parser.add_argument("--gazetteer", help="gazetteer CSV joined to a name,region point list")


def _add_diversity_options(parser: argparse.ArgumentParser, default_level: str) -> None:
    parser.add_argument("--records")
    parser.add_argument("--assignments")
    _add_prediction_inputs(parser)
    _add_point_inputs(parser)
    parser.add_argument("--group-by", dest="group_by", choices=LEVELS, default=default_level)
    parser.add_argument("--n", dest="cr_n", type=int)
    parser.add_argument("--mode", choices=("model_a", "model_b", "agreement"))
    parser.add_argument("--exclude-terms", dest="exclude_terms", help="comma-separated terms, e.g. corona,covid-19")
    parser.add_argument("--exclude-langs", dest="exclude_langs", help="comma-separated language codes")


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = _Parser(prog="langdiv", description="Linguistic diversity of places from geotagged text.", parents=[common])
    parser.add_argument("--version", action="version", version=f"langdiv {__version__}")
    commands = parser.add_subparsers(dest="command", parser_class=_Parser)

    train = commands.add_parser("train-lid", parents=[common], help="train the two n-gram models on a seed corpus")
    train.add_argument("--corpus", help="directory of <iso639-3>.txt files")
    train.add_argument("--preset", choices=(*sorted(MODEL_PRESETS), "both"), default="both")
    train.add_argument("--alpha", type=float, default=0.1)
    train.add_argument("--ngram-min", dest="ngram_min", type=int, default=1)
    train.add_argument("--ngram-max", dest="ngram_max", type=int, default=4)
    train.add_argument("--sample-len", dest="sample_len", type=int, default=50)

    classify = commands.add_parser("classify", parents=[common], help="predict a language per record")
    classify.add_argument("--records")
    classify.add_argument("--model", dest="model_a")

    compare = commands.add_parser("compare-models", parents=[common], help="agreement between two prediction sets")
    _add_prediction_inputs(compare)
    compare.add_argument("--labels", help="record_id,true_language CSV; scores each prediction set against it")

    assign = commands.add_parser("assign", parents=[common], help="nearest collection point within the radius")
    assign.add_argument("--records")
    _add_point_inputs(assign)
    assign.add_argument("--radius-km", dest="radius_km", type=float)

    diversity = commands.add_parser("diversity", parents=[common], help="CR_n per place")
    _add_diversity_options(diversity, "region")
    diversity.add_argument("--top-k", dest="top_k", type=int, default=10)

    series = commands.add_parser("timeseries", parents=[common], help="monthly series and diagnostics")
    _add_diversity_options(series, "national")
    series.add_argument("--model-a", dest="model_a")
    series.add_argument("--model-b", dest="model_b")
    series.add_argument("--tz-offset", dest="tz_offset", type=int, help="minutes added before bucketing")
    series.add_argument("--languages", help="comma-separated codes for language_series output")
    series.add_argument("--k-mad", dest="k_mad", type=float, default=5.0)
    series.add_argument("--windows", type=int, default=4)
    series.add_argument("--drift-threshold", dest="drift_threshold", type=float, default=0.10)

    census = commands.add_parser("compare-census", parents=[common], help="census CR and the correlation battery")
    for name in ("census", "crosswalk", "table4", "table5", "table6", "references"):
        census.add_argument(f"--{name}")
    census.add_argument("--year", dest="years", type=int, action="append", help="repeatable; default every year")
    census.add_argument(
        "--reference-method", dest="reference_method", choices=("pearson", "spearman"), default="pearson"
    )
    census.add_argument("--n", dest="cr_n", type=int)
    census.add_argument("--top-k", dest="top_k", type=int, default=10)
    census.add_argument("--keep-signed", dest="drop_signed", action="store_const", const=False)
    census.add_argument("--keep-other-nfd", dest="drop_other_nfd", action="store_const", const=False)
    census.add_argument("--keep-none", dest="drop_none_too_young", action="store_const", const=False)
    census.add_argument("--exclude-label", dest="exclude_labels", action="append")

    synth = commands.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    synth.add_argument("--profiles")
    synth.add_argument("--pool", help="seed corpus directory whose held-out split is the sentence pool")
    synth.add_argument("--months", required=True, help="YYYY-MM:YYYY-MM")

    report = commands.add_parser("report", parents=[common], help="summary and plot-ready CSVs")
    report.add_argument("--run-dir", dest="run_dir")
    return parser


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def _config_flags(args: argparse.Namespace) -> Dict[str, Any]:
    values = vars(args)
    return {name: values[name] for name in RunConfig.model_fields if values.get(name) is not None}


def error_line(kind: str, code: int, message: str) -> str:
    return f"langdiv: error kind={kind} exit={code} message={json.dumps(message, ensure_ascii=False)}"


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        configure_logging(getattr(args, "verbose", 0) or 0)
        if not args.command:
            raise UsageError("a subcommand is required")
        config = RunConfig.resolve(getattr(args, "config", None), _config_flags(args))
        written: List = HANDLERS[args.command](args, config)
    except LangDivError as exc:
        print(error_line(exc.kind, exc.exit_code, str(exc)), file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        LOGGER.debug("internal error", exc_info=True)
        print(error_line("internal", INTERNAL_EXIT, f"{type(exc).__name__}: {exc}"), file=sys.stderr)
        return INTERNAL_EXIT
    for path in written:
        print(path)
    return 0
