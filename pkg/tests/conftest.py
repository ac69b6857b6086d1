import datetime as dt
import pathlib
import sys

import pytest

ROOT = pathlib.Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from langdiv.services import sources
from langdiv.services.models import TextRecord
from langdiv.services.pipeline import MODEL_PRESETS
from langdiv.services.preprocess import labeled_texts
from langdiv.tools import langid


def _train_preset(name: str) -> langid.LanguageModel:
    train_split, _ = sources.load_seed_splits()
    preset = MODEL_PRESETS[name]
    languages = sorted(set(train_split) - preset.excluded_languages)
    config = langid.TrainingConfig(language_weights=dict(preset.language_weights))
    return langid.train_model(
        labeled_texts({code: train_split[code] for code in languages}),
        config,
        model_id=preset.model_id,
        languages=languages,
    )


@pytest.fixture(scope="session")
def seed_splits():
    return sources.load_seed_splits()


@pytest.fixture(scope="session")
def idnet_model():
    return _train_preset("idnet")


@pytest.fixture(scope="session")
def pacific_model():
    return _train_preset("pacificlid")


@pytest.fixture(scope="session")
def bundled_points():
    return sources.load_points()


def make_record(record_id: str, text: str = "hello world", when: dt.datetime | None = None, **coords) -> TextRecord:
    return TextRecord(
        id=record_id,
        text=text,
        timestamp=when or dt.datetime(2020, 9, 1, tzinfo=dt.timezone.utc),
        lat=coords.get("lat"),
        lon=coords.get("lon"),
        geohash=coords.get("geohash"),
    )
