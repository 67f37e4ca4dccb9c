"""Pipeline configuration: YAML file validated into typed, defaulted settings.

Relative paths are resolved against the directory holding the config file.
Secrets never live here; they come from environment variables.
"""

from __future__ import annotations

import datetime as dt
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .language import DEFAULT_INTENTS


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class HarvestSettings(_Section):
    keywords: tuple[str, ...] = ("rasa", "chatbot")
    snapshot_date: dt.date = dt.date(2025, 1, 14)
    page_size: int = Field(100, ge=1, le=100)
    qualifiers: str = ""
    api_url: str = "https://api.github.com"

    @field_validator("keywords")
    @classmethod
    def _nonempty(cls, v: tuple[str, ...]) -> tuple[str, ...]:
        if not v or not all(k.strip() for k in v):
            raise ValueError("at least one non-blank keyword is required")
        return v


class ParallelismSettings(_Section):
    fetch: int = Field(8, ge=1, le=64)
    units: int = Field(4, ge=1, le=64)
    detect: int = Field(4, ge=1, le=64)
    llm: int = Field(4, ge=1, le=64)


class DedupSettings(_Section):
    threshold: float = Field(0.95, ge=0.0, le=1.0)


class LanguageSettings(_Section):
    seed: int = 20250114
    batch_size: int = Field(50, ge=1, le=1000)
    default_intents: tuple[str, ...] = DEFAULT_INTENTS
    review_file: Path | None = None


class LlmSettings(_Section):
    temperature: float = Field(1.0, ge=0.0)
    top_p: float = Field(0.15, gt=0.0, le=1.0)
    samples: int = Field(10, ge=1)
    model_name: str = "gpt-4o"


class EnrichSettings(_Section):
    review_file: Path | None = None
    aliases_file: Path | None = None
    categories_file: Path | None = None


class ReportSettings(_Section):
    rasa3_release: dt.date = dt.date(2021, 12, 1)
    formats: tuple[Literal["csv", "json", "svg"], ...] = ("csv", "json", "svg")


class PipelineConfig(_Section):
    mode: Literal["live", "replay"] = "replay"
    fixtures: Path | None = None
    checkpoint_dir: Path = Path("checkpoints")
    cache_dir: Path = Path("cache")
    out_dir: Path = Path("out")
    harvest: HarvestSettings = HarvestSettings()
    parallelism: ParallelismSettings = ParallelismSettings()
    dedup: DedupSettings = DedupSettings()
    language: LanguageSettings = LanguageSettings()
    llm: LlmSettings = LlmSettings()
    enrich: EnrichSettings = EnrichSettings()
    report: ReportSettings = ReportSettings()

    @model_validator(mode="after")
    def _replay_needs_fixtures(self) -> "PipelineConfig":
        if self.mode == "replay" and self.fixtures is None:
            raise ValueError("replay mode requires 'fixtures'")
        return self

    def section(self, name: str) -> dict[str, Any]:
        return getattr(self, name).model_dump(mode="json")

    @property
    def language_review_file(self) -> Path:
        return self.language.review_file or self.checkpoint_dir / "language_review.csv"

    @property
    def service_review_file(self) -> Path:
        return self.enrich.review_file or self.checkpoint_dir / "service_review.csv"

    @property
    def aliases_file(self) -> Path:
        return self.enrich.aliases_file or self.checkpoint_dir / "service_aliases.json"


def _resolve(cfg: PipelineConfig, base: Path) -> PipelineConfig:
    def fix(p: Path | None) -> Path | None:
        if p is None or p.is_absolute():
            return p
        return (base / p).resolve()

    return cfg.model_copy(update={
        "fixtures": fix(cfg.fixtures),
        "checkpoint_dir": fix(cfg.checkpoint_dir),
        "cache_dir": fix(cfg.cache_dir),
        "out_dir": fix(cfg.out_dir),
        "language": cfg.language.model_copy(update={"review_file": fix(cfg.language.review_file)}),
        "enrich": cfg.enrich.model_copy(update={
            "review_file": fix(cfg.enrich.review_file),
            "aliases_file": fix(cfg.enrich.aliases_file),
            "categories_file": fix(cfg.enrich.categories_file),
        }),
    })


def _first_error(exc: ValidationError) -> ConfigError:
    err = exc.errors()[0]
    key = ".".join(str(p) for p in err["loc"]) or None
    if err["type"] == "extra_forbidden":
        return ConfigError("unknown key", key)
    return ConfigError(err["msg"], key)


def parse_config(data: Any, base_dir: str | Path = ".") -> PipelineConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    try:
        cfg = PipelineConfig.model_validate(data)
    except ValidationError as exc:
        raise _first_error(exc) from None
    return _resolve(cfg, Path(base_dir).resolve())


def validate_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    return parse_config(data, path.parent)
