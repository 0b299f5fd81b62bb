from pydantic_settings import BaseSettings, SettingsConfigDict

# Planning step and horizon: 0.5 s waypoints over 3 s.
DT_S = 0.5
HORIZON = 6


class Settings(BaseSettings):
    """Process-level knobs; run parameters live in the YAML RunConfig."""

    model_config = SettingsConfigDict(env_prefix="VLA_WORLD_", env_file=".env", extra="ignore")

    LOG: str = "INFO"
    LOG_FORMAT: str = "plain"
    DEFAULT_CONFIG: str = "configs/default.yaml"


settings = Settings()
