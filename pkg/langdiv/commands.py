"""One handler per subcommand; each returns the paths it wrote."""

from __future__ import annotations

import argparse
import re
from pathlib import Path
from typing import Callable, Dict, List, Sequence

from langdiv.services.config import RunConfig
from langdiv.services.errors import UsageError
from langdiv.services.models import Month
from langdiv.services.pipeline import MODEL_PRESETS, PipelineService
from langdiv.tools.timeseries import month_span

Handler = Callable[[argparse.Namespace, RunConfig], List[Path]]

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


def split_list(value: str | None) -> List[str]:
    if not value:
        return []
    return [item.strip() for item in value.split(",") if item.strip()]


def parse_month(value: str) -> Month:
    match = _MONTH_RE.match(value.strip())
    if not match or not 1 <= int(match.group(2)) <= 12:
        raise UsageError(f"invalid month {value!r}; expected YYYY-MM")
    return (int(match.group(1)), int(match.group(2)))


def parse_month_range(value: str) -> List[Month]:
    start, sep, end = value.partition(":")
    first = parse_month(start)
    last = parse_month(end) if sep else first
    if last < first:
        raise UsageError(f"month range {value!r} ends before it starts")
    return month_span(first, last)


def train_lid(args: argparse.Namespace, config: RunConfig) -> List[Path]:
    presets: Sequence[str] = sorted(MODEL_PRESETS) if args.preset == "both" else [args.preset]
    service = PipelineService(config)
    models = service.train_models(presets, (args.ngram_min, args.ngram_max), args.alpha, args.sample_len)
    written = [service.out_dir / f"{model_id}.lidm" for model_id in sorted(models)]
    written.append(service.out_dir / "lid_evaluation.csv")
    return written


def classify(args: argparse.Namespace, config: RunConfig) -> List[Path]:
    return [PipelineService(config).classify()]


def compare_models(args: argparse.Namespace, config: RunConfig) -> List[Path]:
    return PipelineService(config).compare_models()


def assign(args: argparse.Namespace, config: RunConfig) -> List[Path]:
    return PipelineService(config).assign()


def diversity(args: argparse.Namespace, config: RunConfig) -> List[Path]:
    return PipelineService(config).diversity(
        level=args.group_by,
        exclude_terms=split_list(args.exclude_terms),
        exclude_languages=frozenset(split_list(args.exclude_langs)),
        top=args.top_k,
    )


def timeseries(args: argparse.Namespace, config: RunConfig) -> List[Path]:
    return PipelineService(config).timeseries(
        level=args.group_by,
        languages=split_list(args.languages),
        exclude_terms=split_list(args.exclude_terms),
        exclude_languages=frozenset(split_list(args.exclude_langs)),
        k_mad=args.k_mad,
        windows=args.windows,
        drift_threshold=args.drift_threshold,
    )


def compare_census(args: argparse.Namespace, config: RunConfig) -> List[Path]:
    return PipelineService(config).compare_census(
        years=args.years, top=args.top_k, reference_method=args.reference_method
    )


def synth(args: argparse.Namespace, config: RunConfig) -> List[Path]:
    return PipelineService(config).synth(parse_month_range(args.months))


def report(args: argparse.Namespace, config: RunConfig) -> List[Path]:
    return PipelineService(config).report(Path(args.run_dir) if args.run_dir else None)


HANDLERS: Dict[str, Handler] = {
    "train-lid": train_lid,
    "classify": classify,
    "compare-models": compare_models,
    "assign": assign,
    "diversity": diversity,
    "timeseries": timeseries,
    "compare-census": compare_census,
    "synth": synth,
    "report": report,
}
