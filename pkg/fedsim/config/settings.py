from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()


class Settings(BaseSettings):
    """Process-level knobs; experiment semantics live in RunConfig."""

    model_config = SettingsConfigDict(env_prefix="FEDSIM_")

    log_level: str = "INFO"
    log_format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    threads: int = Field(1, ge=1)
    output_dir: str = "output"
    record_wall_time: bool = False
    milestone_window: int = Field(5, ge=1)
    final_window: int = Field(10, ge=1)
    selftest_seed: int = 0


settings = Settings()
