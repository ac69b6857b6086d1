"""
Character n-gram language identification.

Texts are normalized (NFC, lowercase, URLs/@-mentions removed, hashtag bodies
kept) and split into padded character 1- to 4-grams. A multinomial naive Bayes
model with add-alpha smoothing is fitted with scikit-learn, then frozen into a
:class:`LanguageModel` holding plain numpy arrays so classification needs no
estimator object and the model can be written to a compact binary file.

Model file layout (little-endian)::

    magic      4 bytes  b"LIDM"
    version    u16      FORMAT_VERSION
    min_n      u16
    max_n      u16
    alpha      f64
    model_id   u16 length + UTF-8 bytes
    languages  u16 count, then per language: u8 length + ASCII code
    vocabulary u32 count, then per n-gram: u16 length + UTF-8 bytes
    priors     f64[languages]
    weights    f64[languages x vocabulary], row-major
"""

from __future__ import annotations

import io
import logging
import re
import struct
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np
from scipy.special import softmax
from sklearn.feature_extraction.text import CountVectorizer
from sklearn.metrics import precision_recall_fscore_support
from sklearn.naive_bayes import MultinomialNB

from langdiv.services.errors import ArgumentError, ModelFormatError, TrainingError
from langdiv.services.models import (
    UNDETERMINED,
    AgreementReport,
    EvaluationReport,
    LanguagePrediction,
    LanguageScores,
    TextRecord,
)

LOGGER = logging.getLogger(__name__)

MAGIC = b"LIDM"
FORMAT_VERSION = 1
MIN_TEXT_CHARS = 5
DEFAULT_SAMPLE_LEN = 50

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+")
_HASHTAG_RE = re.compile(r"#(?=\w)")
_SPACE_RE = re.compile(r"\s+")


def normalize_text(raw: str) -> str:
    text = unicodedata.normalize("NFC", raw)
    text = _URL_RE.sub(" ", text)
    text = _MENTION_RE.sub(" ", text)
    text = _HASHTAG_RE.sub("", text)
    text = text.lower()
    return _SPACE_RE.sub(" ", text).strip()


def char_ngrams(text: str, ngram_range: Tuple[int, int] = (1, 4)) -> List[str]:
    """Character n-grams of an already normalized text, padded with one space."""
    min_n, max_n = ngram_range
    padded = f" {text} "
    grams: List[str] = []
    for n in range(min_n, max_n + 1):
        grams.extend(padded[i : i + n] for i in range(len(padded) - n + 1))
    return grams


@dataclass(frozen=True)
class TrainingConfig:
    ngram_range: Tuple[int, int] = (1, 4)
    alpha: float = 0.1
    language_weights: Mapping[str, float] = field(default_factory=dict)

    def validate(self) -> None:
        min_n, max_n = self.ngram_range
        if min_n < 1 or max_n < min_n:
            raise ArgumentError(f"invalid n-gram range {self.ngram_range}")
        if self.alpha <= 0:
            raise ArgumentError(f"smoothing alpha must be > 0, got {self.alpha}")
        for code, weight in self.language_weights.items():
            if weight <= 0:
                raise ArgumentError(f"weight for {code} must be > 0, got {weight}")


@dataclass(frozen=True, eq=False)
class LanguageModel:
    model_id: str
    languages: Tuple[str, ...]
    ngram_range: Tuple[int, int]
    alpha: float
    vocabulary: Tuple[str, ...]
    priors: np.ndarray
    log_likelihoods: np.ndarray
    _index: Dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.languages:
            raise ArgumentError("a language model needs at least one language")
        if self.log_likelihoods.shape != (len(self.languages), len(self.vocabulary)):
            raise ModelFormatError("weight matrix does not match languages x vocabulary")
        if not (np.all(np.isfinite(self.priors)) and np.all(np.isfinite(self.log_likelihoods))):
            raise ModelFormatError("model weights must be finite")
        if not self._index:
            self._index.update({gram: idx for idx, gram in enumerate(self.vocabulary)})

    def feature_counts(self, normalized: str) -> Tuple[np.ndarray, np.ndarray]:
        counts = Counter(char_ngrams(normalized, self.ngram_range))
        columns: List[int] = []
        values: List[float] = []
        for gram, count in counts.items():
            column = self._index.get(gram)
            if column is not None:
                columns.append(column)
                values.append(float(count))
        return np.asarray(columns, dtype=np.int64), np.asarray(values, dtype=float)

    # ------------------------------------------------------------------
    # Serialization
    # ------------------------------------------------------------------
    def to_bytes(self) -> bytes:
        buffer = io.BytesIO()
        buffer.write(MAGIC)
        buffer.write(struct.pack("<HHHd", FORMAT_VERSION, self.ngram_range[0], self.ngram_range[1], self.alpha))
        model_id = self.model_id.encode("utf-8")
        buffer.write(struct.pack("<H", len(model_id)))
        buffer.write(model_id)
        buffer.write(struct.pack("<H", len(self.languages)))
        for code in self.languages:
            encoded = code.encode("ascii")
            buffer.write(struct.pack("<B", len(encoded)))
            buffer.write(encoded)
        buffer.write(struct.pack("<I", len(self.vocabulary)))
        for gram in self.vocabulary:
            encoded = gram.encode("utf-8")
            buffer.write(struct.pack("<H", len(encoded)))
            buffer.write(encoded)
        buffer.write(np.ascontiguousarray(self.priors, dtype="<f8").tobytes())
        buffer.write(np.ascontiguousarray(self.log_likelihoods, dtype="<f8").tobytes())
        return buffer.getvalue()

    @classmethod
    def from_bytes(cls, payload: bytes) -> "LanguageModel":
        reader = _Reader(payload)
        if reader.take(4) != MAGIC:
            raise ModelFormatError("not a language model file (bad magic)")
        version, min_n, max_n, alpha = reader.unpack("<HHHd")
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported model format version {version}")
        (id_len,) = reader.unpack("<H")
        model_id = reader.take(id_len).decode("utf-8")
        (n_languages,) = reader.unpack("<H")
        languages = []
        for _ in range(n_languages):
            (length,) = reader.unpack("<B")
            languages.append(reader.take(length).decode("ascii"))
        (n_vocab,) = reader.unpack("<I")
        vocabulary = []
        for _ in range(n_vocab):
            (length,) = reader.unpack("<H")
            vocabulary.append(reader.take(length).decode("utf-8"))
        priors = np.frombuffer(reader.take(8 * n_languages), dtype="<f8").astype(float)
        weights = np.frombuffer(reader.take(8 * n_languages * n_vocab), dtype="<f8").astype(float)
        if not reader.exhausted:
            raise ModelFormatError("trailing bytes after model payload")
        return cls(
            model_id=model_id,
            languages=tuple(languages),
            ngram_range=(min_n, max_n),
            alpha=alpha,
            vocabulary=tuple(vocabulary),
            priors=priors,
            log_likelihoods=weights.reshape(n_languages, n_vocab),
        )

    def save(self, path: Path) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(self.to_bytes())
        return target

    @classmethod
    def load(cls, path: Path) -> "LanguageModel":
        target = Path(path)
        if not target.is_file():
            raise ArgumentError(f"model file not found: {target}")
        return cls.from_bytes(target.read_bytes())


class _Reader:
    def __init__(self, payload: bytes) -> None:
        self._payload = payload
        self._offset = 0

    def take(self, size: int) -> bytes:
        end = self._offset + size
        if end > len(self._payload):
            raise ModelFormatError("model file is truncated")
        chunk = self._payload[self._offset : end]
        self._offset = end
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    @property
    def exhausted(self) -> bool:
        return self._offset == len(self._payload)


# ----------------------------------------------------------------------
# Training
# ----------------------------------------------------------------------
def train_model(
    corpus: Iterable[Tuple[str, str]],
    config: TrainingConfig | None = None,
    model_id: str = "lid",
    languages: Iterable[str] | None = None,
) -> LanguageModel:
    """Fit a multinomial n-gram model on ``(language, text)`` pairs.

    Every declared language (``languages`` or, by default, every label seen)
    must keep at least one non-empty text after normalization.
    """
    cfg = config or TrainingConfig()
    cfg.validate()
    pairs = list(corpus)
    declared = sorted(set(languages) if languages is not None else {code for code, _ in pairs})
    if not declared:
        raise TrainingError("training corpus is empty")

    texts: List[str] = []
    labels: List[str] = []
    for code, text in pairs:
        if code not in declared:
            continue
        normalized = normalize_text(text)
        if normalized:
            texts.append(normalized)
            labels.append(code)

    usable = set(labels)
    for code in declared:
        if code not in usable:
            raise TrainingError(f"language '{code}' has no usable training text after normalization")

    vectorizer = CountVectorizer(
        analyzer=partial(char_ngrams, ngram_range=cfg.ngram_range),
        lowercase=False,
    )
    features = vectorizer.fit_transform(texts)
    sample_weight = np.asarray([cfg.language_weights.get(code, 1.0) for code in labels], dtype=float)
    estimator = MultinomialNB(alpha=cfg.alpha)
    estimator.fit(features, labels, sample_weight=sample_weight)

    model = LanguageModel(
        model_id=model_id,
        languages=tuple(str(code) for code in estimator.classes_),
        ngram_range=cfg.ngram_range,
        alpha=cfg.alpha,
        vocabulary=tuple(str(gram) for gram in vectorizer.get_feature_names_out()),
        priors=np.asarray(estimator.class_log_prior_, dtype=float),
        log_likelihoods=np.asarray(estimator.feature_log_prob_, dtype=float),
    )
    LOGGER.info(
        "trained %s: %d languages, %d texts, %d n-grams",
        model_id,
        len(model.languages),
        len(texts),
        len(model.vocabulary),
    )
    return model


# ----------------------------------------------------------------------
# Classification
# ----------------------------------------------------------------------
def _posterior_normalized(model: LanguageModel, normalized: str) -> np.ndarray:
    columns, values = model.feature_counts(normalized)
    scores = model.priors.copy()
    if columns.size:
        scores = scores + model.log_likelihoods[:, columns] @ values
    return softmax(scores)


def posterior(model: LanguageModel, text: str) -> Dict[str, float]:
    probs = _posterior_normalized(model, normalize_text(text))
    return {code: float(prob) for code, prob in zip(model.languages, probs)}


def _classify_normalized(model: LanguageModel, normalized: str, record_id: str) -> LanguagePrediction:
    if len(normalized) < MIN_TEXT_CHARS:
        return LanguagePrediction(record_id=record_id, language=UNDETERMINED, confidence=0.0)
    probs = _posterior_normalized(model, normalized)
    # languages are sorted, so argmax's first-hit rule picks the smallest code on ties
    best = int(np.argmax(probs))
    return LanguagePrediction(
        record_id=record_id,
        language=model.languages[best],
        confidence=float(min(1.0, max(0.0, probs[best]))),
    )


def classify(model: LanguageModel, text: str, record_id: str = "") -> LanguagePrediction:
    return _classify_normalized(model, normalize_text(text), record_id)


def classify_records(model: LanguageModel, records: Sequence[TextRecord]) -> List[LanguagePrediction]:
    """Classify records in order, scoring each distinct normalized text once."""
    cache: Dict[str, LanguagePrediction] = {}
    predictions: List[LanguagePrediction] = []
    for record in records:
        normalized = normalize_text(record.text)
        cached = cache.get(normalized)
        if cached is None:
            cached = _classify_normalized(model, normalized, "")
            cache[normalized] = cached
        predictions.append(LanguagePrediction(record.id, cached.language, cached.confidence))
    return predictions


# ----------------------------------------------------------------------
# Evaluation and model agreement
# ----------------------------------------------------------------------
def evaluate(
    model: LanguageModel,
    test: Sequence[Tuple[str, str]],
    sample_len: int = DEFAULT_SAMPLE_LEN,
) -> EvaluationReport:
    if not test:
        raise ArgumentError("evaluation needs at least one labelled text")
    if sample_len < MIN_TEXT_CHARS:
        raise ArgumentError(f"sample_len must be >= {MIN_TEXT_CHARS}, got {sample_len}")
    unknown = sorted({code for code, _ in test} - set(model.languages))
    if unknown:
        raise ArgumentError(f"test labels not in model {model.model_id}: {', '.join(unknown)}")

    y_true = [code for code, _ in test]
    y_pred = [
        _classify_normalized(model, normalize_text(text)[:sample_len], "").language
        for _, text in test
    ]
    return _score(y_true, y_pred)


def score_predictions(predictions: Sequence[LanguagePrediction], labels: Mapping[str, str]) -> EvaluationReport:
    """Score a prediction set against known record labels (``und`` counts as a miss).

    Only records present in both are scored.
    """
    indexed = _index_predictions(predictions, "scored")
    shared = sorted(set(indexed) & set(labels))
    if not shared:
        raise ArgumentError("no prediction shares a record id with the labels")
    if len(shared) < len(indexed):
        LOGGER.warning("%d predictions have no label and are not scored", len(indexed) - len(shared))
    return _score([labels[record_id] for record_id in shared], [indexed[record_id] for record_id in shared])


def _score(y_true: Sequence[str], y_pred: Sequence[str]) -> EvaluationReport:
    labels = sorted(set(y_true))
    precision, recall, f1, support = precision_recall_fscore_support(
        y_true, y_pred, labels=labels, average=None, zero_division=0
    )
    per_language = {
        code: LanguageScores(float(p), float(r), float(f), int(s))
        for code, p, r, f, s in zip(labels, precision, recall, f1, support)
    }
    return EvaluationReport(
        per_language=per_language,
        macro_precision=float(np.mean(precision)),
        macro_recall=float(np.mean(recall)),
        macro_f1=float(np.mean(f1)),
    )


def _index_predictions(predictions: Sequence[LanguagePrediction], name: str) -> Dict[str, str]:
    indexed = {prediction.record_id: prediction.language for prediction in predictions}
    if len(indexed) != len(predictions):
        raise ArgumentError(f"prediction set {name} repeats record ids")
    return indexed


def compare_models(
    preds_a: Sequence[LanguagePrediction], preds_b: Sequence[LanguagePrediction]
) -> AgreementReport:
    """Count disagreements; ``und`` against a language counts as a mismatch."""
    left = _index_predictions(preds_a, "a")
    right = _index_predictions(preds_b, "b")
    difference = set(left).symmetric_difference(right)
    if difference:
        raise ArgumentError(
            f"prediction sets cover different records (symmetric difference: {len(difference)})"
        )
    pairs: Counter[Tuple[str, str]] = Counter(
        (left[record_id], right[record_id])
        for record_id in left
        if left[record_id] != right[record_id]
    )
    mismatches = sum(pairs.values())
    total = len(left)
    ordered = tuple(sorted(pairs.items(), key=lambda item: (-item[1], item[0])))
    return AgreementReport(
        total=total,
        mismatches=mismatches,
        mismatch_rate=mismatches / total if total else 0.0,
        reclassification_pairs=ordered,
    )


def agreed_record_ids(
    preds_a: Sequence[LanguagePrediction], preds_b: Sequence[LanguagePrediction]
) -> frozenset[str]:
    left = _index_predictions(preds_a, "a")
    right = _index_predictions(preds_b, "b")
    if set(left) != set(right):
        raise ArgumentError(
            "agreement needs predictions over the same records "
            f"(symmetric difference: {len(set(left) ^ set(right))})"
        )
    return frozenset(record_id for record_id, code in left.items() if right[record_id] == code)
