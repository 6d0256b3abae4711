from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Runtime
    threads: int = Field(default=4, ge=1)  # NITCG_THREADS caps worker threads
    log_level: str = "INFO"
    progress: bool = True

    model_config = SettingsConfigDict(env_prefix="NITCG_", env_file=".env", extra="ignore")


# Global settings instance
settings = Settings()
