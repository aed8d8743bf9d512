import os
from pathlib import Path
from typing import Literal

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class BaseAppSettings(BaseSettings):
    """
    Process-level configuration for fedrep.
    Loads from .env and .env.{FEDREP_ENV} files and FEDREP_* variables.
    Experiment parameters live in scenario files, not here.
    """

    _env = os.getenv("FEDREP_ENV", "development").lower()
    model_config = SettingsConfigDict(
        env_prefix="FEDREP_",
        env_file=(".env", f".env.{_env}"),
        env_file_encoding="utf-8",
        extra="ignore",
    )

    env: Literal["development", "testing", "production"] = "development"
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"
    log_format: Literal["pretty", "json"] = "pretty"

    # Threads used for client training within a round
    workers: int = Field(default=1, ge=1)
    results_dir: Path = Path("results")

    @field_validator("results_dir", mode="before")
    @classmethod
    def empty_str_to_default(cls, v: str | Path | None) -> str | Path:
        if v in ("", None):
            return Path("results")
        return v  # type: ignore[return-value]

    @property
    def is_production(self) -> bool:
        return self.env == "production"

    @property
    def is_testing(self) -> bool:
        return self.env == "testing"


class DevelopmentSettings(BaseAppSettings):
    """Configuration for interactive use."""

    env: Literal["development"] = "development"  # type: ignore


class TestingSettings(BaseAppSettings):
    """Configuration for the test suite."""

    env: Literal["testing"] = "testing"  # type: ignore
    log_format: Literal["pretty"] = "pretty"  # type: ignore
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "WARNING"


class ProductionSettings(BaseAppSettings):
    """Configuration for batch runs on shared machines. Logs are JSON."""

    env: Literal["production"] = "production"  # type: ignore
    log_format: Literal["json"] = "json"  # type: ignore


def get_settings() -> BaseAppSettings:
    """Factory to return the correct settings object based on FEDREP_ENV."""
    env = os.getenv("FEDREP_ENV", "development").lower()

    if env == "production":
        return ProductionSettings()
    elif env == "testing":
        return TestingSettings()
    else:
        return DevelopmentSettings()


settings = get_settings()
