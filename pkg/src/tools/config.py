# ==============================================
# File: src/tools/config.py
# Description: Run configuration: key=value file (python-dotenv) merged with CLI flags
# ==============================================
from __future__ import annotations
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple
import logging

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.core.errors import ConfigError
from src.core.training import TrainConfig

logger = logging.getLogger(__name__)

TRAIN_KEYS = frozenset(TrainConfig.model_fields)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    train: TrainConfig = Field(default_factory=TrainConfig, description="Model and optimiser settings")
    train_problems: Optional[str] = Field(default=None, description="Explicit train problem ids, e.g. '1-15'")
    val_problems: Optional[str] = Field(default=None, description="Explicit validation problem ids")
    test_problems: Optional[str] = Field(default=None, description="Explicit test problem ids (default: the rest)")
    split_ratio: Tuple[float, float, float] = Field(default=(0.5, 0.25, 0.25),
                                                    description="Seeded train/val/test ratio split")
    train_pairs: int = Field(default=200, ge=2, description="Pairs sampled from the train problems")
    eval_pairs: int = Field(default=100, ge=2, description="Pairs sampled from each of val and test")
    strict: bool = Field(default=False, description="Fail on unsupported instructions instead of skipping")

    @field_validator("split_ratio", mode="before")
    @classmethod
    def _split_ratio_from_text(cls, value: Any) -> Any:
        if isinstance(value, str):
            return tuple(float(part) for part in value.split(","))
        return value

    @property
    def seed(self) -> int:
        return self.train.seed


def load_config_file(path: Optional[Path]) -> Dict[str, str]:
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    values = {k.strip().lower(): v for k, v in dotenv_values(path).items()}
    missing = sorted(k for k, v in values.items() if v is None)
    if missing:
        raise ConfigError(f"{path}: keys without a value: {missing}")
    return values


def build_run_config(file_values: Mapping[str, Any], overrides: Mapping[str, Any]) -> RunConfig:
    """File values first, then every override that is not None."""
    merged: Dict[str, Any] = dict(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    train = {k: v for k, v in merged.items() if k in TRAIN_KEYS}
    run = {k: v for k, v in merged.items() if k not in TRAIN_KEYS}
    unknown = sorted(set(run) - set(RunConfig.model_fields) - {"train"})
    if unknown:
        raise ConfigError(f"unknown configuration keys: {unknown}")
    config = RunConfig(train=TrainConfig(**train), **run)
    logger.debug("Run configuration: %s", config.model_dump_json())
    return config
