from __future__ import annotations

import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from langdiv.services.errors import ConfigError
from langdiv.services.models import ExclusionPolicy

ENV_PREFIX = "LANGDIV_"

INPUT_PATH_FIELDS = (
    "records",
    "points",
    "gazetteer",
    "census",
    "crosswalk",
    "corpus",
    "model_a",
    "model_b",
    "predictions_a",
    "predictions_b",
    "labels",
    "assignments",
    "table4",
    "table5",
    "table6",
    "references",
    "profiles",
    "pool",
)


class RunConfig(BaseModel):
    """Resolved settings for one invocation.

    Values come from defaults, then the ``--config`` TOML file, then
    ``LANGDIV_<FIELD>`` environment variables, then command-line flags.
    """

    model_config = ConfigDict(extra="forbid")

    records: Optional[Path] = None
    points: Optional[Path] = None
    gazetteer: Optional[Path] = None
    census: Optional[Path] = None
    crosswalk: Optional[Path] = None
    corpus: Optional[Path] = None
    model_a: Optional[Path] = None
    model_b: Optional[Path] = None
    predictions_a: Optional[Path] = None
    predictions_b: Optional[Path] = None
    labels: Optional[Path] = None
    assignments: Optional[Path] = None
    table4: Optional[Path] = None
    table5: Optional[Path] = None
    table6: Optional[Path] = None
    references: Optional[Path] = None
    profiles: Optional[Path] = None
    pool: Optional[Path] = None

    radius_km: float = Field(default=50.0, gt=0)
    cr_n: int = Field(default=10, ge=1)
    mode: Literal["model_a", "model_b", "agreement"] = "model_a"
    tz_offset: int = Field(default=0, ge=-14 * 60, le=14 * 60)
    out_dir: Path = Path("out")
    seed: int = 0
    jobs: int = Field(default=1, ge=1)

    drop_signed: bool = True
    drop_other_nfd: bool = True
    drop_none_too_young: bool = True
    exclude_labels: List[str] = Field(default_factory=list)

    @field_validator(*INPUT_PATH_FIELDS)
    @classmethod
    def _path_exists(cls, value: Optional[Path]) -> Optional[Path]:
        if value is not None and not value.exists():
            raise ValueError(f"path does not exist: {value}")
        return value

    @field_validator("exclude_labels", mode="before")
    @classmethod
    def _split_labels(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [label.strip() for label in value.split(";") if label.strip()]
        return value

    def exclusion_policy(self) -> ExclusionPolicy:
        return ExclusionPolicy(
            drop_signed=self.drop_signed,
            drop_other_nfd=self.drop_other_nfd,
            drop_none_too_young=self.drop_none_too_young,
            custom_labels=frozenset(self.exclude_labels),
        )

    @classmethod
    def resolve(
        cls,
        config_file: Path | None = None,
        flags: Mapping[str, Any] | None = None,
        environ: Mapping[str, str] | None = None,
    ) -> "RunConfig":
        values: Dict[str, Any] = {}
        if config_file is not None:
            values.update(_read_config_file(Path(config_file)))
        values.update(_read_environment(os.environ if environ is None else environ))
        values.update({key: value for key, value in (flags or {}).items() if value is not None})
        try:
            return cls.model_validate(values)
        except ValidationError as exc:
            first = exc.errors()[0]
            where = ".".join(str(part) for part in first.get("loc", ())) or "config"
            raise ConfigError(f"{where}: {first.get('msg', 'invalid value')}") from exc


def _read_config_file(path: Path) -> Dict[str, Any]:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as handle:
            document = tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    unknown = sorted(set(document) - {"run", "exclusions"})
    if unknown:
        raise ConfigError(f"unknown config tables: {', '.join(unknown)}")
    values: Dict[str, Any] = dict(document.get("run", {}))
    exclusions = document.get("exclusions", {})
    for key in ("drop_signed", "drop_other_nfd", "drop_none_too_young"):
        if key in exclusions:
            values[key] = exclusions[key]
    if "labels" in exclusions:
        values["exclude_labels"] = exclusions["labels"]
    # relative paths in the file resolve against the file's directory
    for key in INPUT_PATH_FIELDS:
        if isinstance(values.get(key), str):
            candidate = Path(values[key])
            values[key] = candidate if candidate.is_absolute() else path.parent / candidate
    return values


def _read_environment(environ: Mapping[str, str]) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for name in RunConfig.model_fields:
        raw = environ.get(f"{ENV_PREFIX}{name.upper()}")
        if raw is not None and raw != "":
            values[name] = raw
    return values
