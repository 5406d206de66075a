"""Configuration management for nonrecip."""

from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Runtime
    threads: int = Field(default=1, ge=1)
    log_level: str = "INFO"

    # Reports
    output_dir: str = "out"
    default_seed: int = 0
    default_format: Literal["csv", "json"] = "csv"

    model_config = SettingsConfigDict(
        env_prefix="NONRECIP_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


# Global settings instance
settings = Settings()
