"""Language histograms, concentration ratios and correlation."""

from __future__ import annotations

import logging
from collections import Counter
from typing import AbstractSet, Callable, Dict, Iterable, List, Sequence

import numpy as np
from scipy import stats

from langdiv.services.errors import ArgumentError, EmptyCellError, UndefinedCorrelationError
from langdiv.services.models import (
    UNDETERMINED,
    CorrelationResult,
    CRResult,
    LanguageHistogram,
    LanguagePrediction,
    RankedLanguage,
    TermFilterResult,
    TextRecord,
)
from langdiv.tools.langid import normalize_text

LOGGER = logging.getLogger(__name__)

DEFAULT_CR_N = 10
LOW_BAND_LIMIT = 0.40
HIGH_BAND_LIMIT = 0.70
EXACT_MAX_N = 10
_EXACT_BATCH = 50_000


def histogram(
    predictions: Iterable[LanguagePrediction],
    place: str,
    period: str = "all",
    exclusions: AbstractSet[str] = frozenset(),
) -> LanguageHistogram:
    counts: Counter[str] = Counter()
    dropped: Counter[str] = Counter()
    for prediction in predictions:
        if prediction.language == UNDETERMINED or prediction.language in exclusions:
            dropped[prediction.language] += 1
        else:
            counts[prediction.language] += 1
    return LanguageHistogram(
        place=place,
        period=period,
        counts=dict(sorted(counts.items())),
        dropped=dict(sorted(dropped.items())),
    )


def _ranked(hist: LanguageHistogram) -> List[tuple[str, int]]:
    return sorted(
        ((code, count) for code, count in hist.counts.items() if count > 0),
        key=lambda item: (-item[1], item[0]),
    )


def band(value: float) -> str:
    if value < LOW_BAND_LIMIT:
        return "low"
    if value <= HIGH_BAND_LIMIT:
        return "medium"
    return "high"


def concentration_ratio(hist: LanguageHistogram, n: int = DEFAULT_CR_N) -> CRResult:
    """Share of included responses taken by the ``n`` most frequent languages."""
    if n < 1:
        raise ArgumentError(f"n must be >= 1, got {n}")
    if any(count < 0 for count in hist.counts.values()):
        raise ArgumentError(f"negative count in cell {hist.cell}")
    total = hist.total
    if total == 0:
        raise EmptyCellError(f"cell {hist.place}/{hist.period} has no language counts")
    top = _ranked(hist)[:n]
    value = min(1.0, sum(count for _, count in top) / total)
    return CRResult(n=n, value=value, band=band(value), languages_used=tuple(code for code, _ in top))


def top_k(hist: LanguageHistogram, k: int) -> List[RankedLanguage]:
    if k < 1:
        raise ArgumentError(f"k must be >= 1, got {k}")
    total = hist.total
    return [
        RankedLanguage(code, count, count / total if total else 0.0)
        for code, count in _ranked(hist)[:k]
    ]


def filter_terms(records: Sequence[TextRecord], terms: Iterable[str]) -> TermFilterResult:
    """Drop records whose normalized text contains any term (case-insensitive)."""
    needles = {normalize_text(term) for term in terms}
    needles.discard("")
    if not needles:
        raise ArgumentError("filter_terms needs at least one non-empty term")
    kept = tuple(
        record
        for record in records
        if not any(needle in normalize_text(record.text) for needle in needles)
    )
    removed = len(records) - len(kept)
    if removed:
        LOGGER.info("term filter removed %d of %d records", removed, len(records))
    return TermFilterResult(kept=kept, removed=removed)


# ----------------------------------------------------------------------
# Correlation
# ----------------------------------------------------------------------
def stars(p_value: float) -> int:
    if p_value < 0.001:
        return 3
    if p_value < 0.01:
        return 2
    if p_value < 0.05:
        return 1
    return 0


def _validate_pair(
    x: Sequence[float], y: Sequence[float], name: str = "spearman"
) -> tuple[np.ndarray, np.ndarray]:
    left = np.asarray(x, dtype=float)
    right = np.asarray(y, dtype=float)
    if left.ndim != 1 or right.ndim != 1 or left.size != right.size:
        raise ArgumentError(f"{name} needs equal-length vectors, got {left.size} and {right.size}")
    if left.size < 3:
        raise ArgumentError(f"{name} needs at least 3 pairs, got {left.size}")
    if not (np.all(np.isfinite(left)) and np.all(np.isfinite(right))):
        raise ArgumentError(f"{name} inputs must be finite")
    if np.ptp(left) == 0 or np.ptp(right) == 0:
        raise UndefinedCorrelationError("correlation is undefined for a constant vector")
    return left, right


def _rank_pearson(ranks_x: np.ndarray, ranks_y: np.ndarray) -> float:
    dx = ranks_x - ranks_x.mean()
    dy = ranks_y - ranks_y.mean()
    rho = float(dx @ dy / np.sqrt((dx @ dx) * (dy @ dy)))
    return float(np.clip(rho, -1.0, 1.0))


def _t_p_value(rho: float, n: int) -> float:
    if abs(rho) >= 1.0:
        return 0.0
    t_stat = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    return float(min(1.0, 2.0 * stats.t.sf(abs(t_stat), n - 2)))


def _exact_p_value(ranks_x: np.ndarray, ranks_y: np.ndarray) -> float:
    centered_y = ranks_y - ranks_y.mean()
    scale_y = np.sqrt(centered_y @ centered_y)

    def statistic(values: np.ndarray, axis: int) -> np.ndarray:
        moved = np.moveaxis(values, axis, -1)
        centered = moved - moved.mean(axis=-1, keepdims=True)
        return (centered @ centered_y) / (np.sqrt((centered * centered).sum(axis=-1)) * scale_y)

    result = stats.permutation_test(
        (ranks_x,),
        statistic,
        permutation_type="pairings",
        n_resamples=np.inf,
        vectorized=True,
        batch=_EXACT_BATCH,
        alternative="two-sided",
    )
    return float(min(1.0, result.pvalue))


def spearman(x: Sequence[float], y: Sequence[float], method: str = "t") -> CorrelationResult:
    """Tie-corrected Spearman rho (Pearson on average ranks).

    ``method="t"`` uses the two-tailed t approximation with n - 2 degrees of
    freedom; ``method="exact"`` enumerates every pairing and is limited to
    ``n <= 10``.
    """
    left, right = _validate_pair(x, y)
    n = int(left.size)
    ranks_x = stats.rankdata(left)
    ranks_y = stats.rankdata(right)
    rho = _rank_pearson(ranks_x, ranks_y)
    if method == "t":
        p_value = _t_p_value(rho, n)
    elif method == "exact":
        if n > EXACT_MAX_N:
            raise ArgumentError(f"exact p-values are limited to n <= {EXACT_MAX_N}, got {n}")
        p_value = _exact_p_value(ranks_x, ranks_y)
    else:
        raise ArgumentError(f"unknown p-value method {method!r}")
    return CorrelationResult(rho=rho, n_pairs=n, p_value=p_value, stars=stars(p_value))


def pearson(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    """Product-moment r on the raw values with the two-tailed t p-value."""
    left, right = _validate_pair(x, y, "pearson")
    result = stats.pearsonr(left, right)
    r = float(np.clip(result.statistic, -1.0, 1.0))
    p_value = float(min(1.0, result.pvalue))
    return CorrelationResult(rho=r, n_pairs=int(left.size), p_value=p_value, stars=stars(p_value))


CORRELATION_METHODS: Dict[str, Callable[[Sequence[float], Sequence[float]], CorrelationResult]] = {
    "spearman": spearman,
    "pearson": pearson,
}
