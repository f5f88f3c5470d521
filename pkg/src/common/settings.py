"""Application settings and configuration."""
from pathlib import Path

from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load .env file if present
load_dotenv()

# Project root
PROJECT_ROOT = Path(__file__).parent.parent.parent


class Settings(BaseSettings):
    """Application settings loaded from ``SVM_``-prefixed environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="SVM_",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging
    log_level: str = "INFO"

    # Training
    kernel_cache_bytes: int = 64 * 1024 * 1024
    default_seed: int = 0
    grid_workers: int = 1

    # Data paths
    data_dir: Path = PROJECT_ROOT / "data"
    checkpoint_dir: Path = PROJECT_ROOT / "data" / "checkpoints"


settings = Settings()
