from __future__ import annotations

from enum import StrEnum
from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class LogLevel(StrEnum):
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="ICL_TS_LAB_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Runtime
    threads: int = 4  # ICL_TS_LAB_THREADS caps the worker pool
    log_level: LogLevel = LogLevel.INFO
    output_dir: str = str(Path.cwd() / "runs")
    seed: int = 0

    # numerics
    power_tol: float = 1e-10
    power_max_iter: int = 5000

    # Brute force / finite-difference caps
    brute_force_max_entries: int = 10**6
    gradcheck_max_entries: int = 10**4

    # Synthetic data (burn-in and monthly seasonality)
    burn_in: int = 50
    seasonality_frequency: int = 30

    # Desk-scale model defaults
    model_dim: int = 32
    model_layers: int = 2
    model_heads: int = 4
    context_length: int = 16
    variate_slots: int = 10


settings = Settings()
