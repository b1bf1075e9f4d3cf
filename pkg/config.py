"""
Configuration management for the AXUNet segmentation toolkit.
Loads environment variables and provides centralized process-level settings.

Run-level settings (data paths, architecture, training hyperparameters) live in
JSON run configs, see models/config_models.py.
"""

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process settings loaded from environment variables (prefix AXUNET_)."""

    # Application Configuration
    log_level: str = "INFO"

    # Parallelism cap for per-case fan-out (AXUNET_THREADS)
    threads: int = Field(default=1, ge=1)

    model_config = SettingsConfigDict(
        env_prefix="AXUNET_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


# Global settings instance
settings = Settings()
