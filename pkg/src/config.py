"""Configuration: environment settings and per-run parameters.

Environment (prefix ``FDG_``, also read from ``.env``):
    FDG_THREADS: worker cap for parallel sections (0 = auto)
    FDG_LOG_LEVEL: structlog level (default: INFO)
    FDG_TIMESTAMPS: embed a timestamp in reports (default: true)

Run parameters live in ``RunConfig``, a JSON document passed with
``--config``. Unknown keys are rejected so typos never silently fall
back to defaults.
"""

import json
from functools import lru_cache
from pathlib import Path
from typing import Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.augmenters import AugmenterSpec
from src.errors import InvalidConfig


class Settings(BaseSettings):
    """Process-wide settings from the environment."""

    model_config = SettingsConfigDict(env_prefix="FDG_", env_file=".env", extra="ignore")

    threads: int = Field(0, ge=0)
    log_level: str = "INFO"
    timestamps: bool = True


@lru_cache
def get_settings() -> Settings:
    return Settings()


class RunConfig(BaseModel):
    """Parameters of one CLI run, echoed verbatim into its report."""

    model_config = ConfigDict(extra="forbid")

    augmenter: AugmenterSpec = Field(default_factory=AugmenterSpec)
    k: int = Field(500, ge=1)
    threshold: float = Field(0.9, gt=0.0, lt=1.0)
    m_generate: int = Field(100, ge=1)
    m_keep: int = Field(50, ge=1)
    mode: Literal["stochastic", "greedy"] = "stochastic"
    subsample: Literal["rank", "value"] = "rank"
    direction: Literal["maximize", "minimize"] = "maximize"
    pool_multiplier: float = Field(3.0, ge=1.0)
    incremental: bool = False
    quotas: Optional[Dict[int, int]] = None
    seed: int = Field(0, ge=0, lt=2**64)

    @field_validator("m_keep")
    @classmethod
    def _keep_not_above_generate(cls, v: int, info) -> int:
        m_generate = info.data.get("m_generate")
        if m_generate is not None and v > m_generate:
            raise ValueError("m_keep must not exceed m_generate")
        return v

    @field_validator("quotas")
    @classmethod
    def _non_negative_quotas(cls, v: Optional[Dict[int, int]]) -> Optional[Dict[int, int]]:
        if v is not None and any(q < 0 for q in v.values()):
            raise ValueError("quotas must be non-negative")
        return v


def parse_model(model_cls, payload: dict, source: str = "config"):
    """Validate a dict into a pydantic model, raising InvalidConfig."""
    try:
        return model_cls.model_validate(payload)
    except ValidationError as e:
        raise InvalidConfig(f"invalid {source}: {e.errors(include_url=False)}") from e


def load_json_config(path: Path | str, model_cls):
    """Read a JSON document and validate it as ``model_cls``."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidConfig(f"cannot read config {path}: {e}") from e
    if not isinstance(payload, dict):
        raise InvalidConfig(f"config {path} must be a JSON object")
    return parse_model(model_cls, payload, source=str(path))
