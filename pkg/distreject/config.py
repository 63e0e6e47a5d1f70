import json
import math
import os
from typing import Any, Dict, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .utils import calculate_hash, canonical_json

SEED_MAX = 2 ** 64 - 1


class ConfigError(ValueError):
    """Invalid configuration, grid or manifest."""


class Config(BaseModel):
    """Global runtime settings."""

    # Output
    output_dir: str = Field(default_factory=lambda: os.getenv("DR_OUTPUT_DIR", "results"))

    # Logging
    log_level: str = "WARNING"

    # Parallel repetitions
    jobs: int = 1


# Global instance (can be overridden)
settings = Config()


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class ForestParams(_Frozen):
    """Leaf-weight forest settings; defaults follow the reported forest setup."""

    num_trees: int = Field(default=1000, ge=1)
    sample_fraction: float = Field(default=0.9, gt=0.0, le=1.0)
    min_node_size: int = Field(default=1, ge=1)
    mtry: Optional[int] = Field(default=None, ge=1)
    seed: int = Field(default=0, ge=0, le=SEED_MAX)


class SplitSpec(_Frozen):
    labeled_frac: float = Field(default=0.5, gt=0.0)
    unlabeled_frac: float = Field(default=0.2, gt=0.0)
    test_frac: float = Field(default=0.3, gt=0.0)
    seed: int = Field(default=0, ge=0, le=SEED_MAX)

    @model_validator(mode="after")
    def _fractions_sum_to_one(self):
        total = math.fsum((self.labeled_frac, self.unlabeled_frac, self.test_frac))
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"split fractions must sum to 1, got {total}")
        return self


class SyntheticSource(_Frozen):
    """Synthetic model drawn by name; ``sizes`` overrides the fraction split."""

    model: str = "sigma-linear"
    params: Dict[str, float] = Field(default_factory=dict)
    n: int = Field(default=2000, ge=3)
    sizes: Optional[Tuple[int, int, int]] = None

    @field_validator("sizes")
    @classmethod
    def _positive_sizes(cls, value):
        if value is not None and min(value) < 1:
            raise ValueError("labeled, unlabeled and test sizes must all be positive")
        return value


class ExperimentConfig(_Frozen):
    data_path: Optional[str] = None
    target: Optional[str] = None
    synthetic: Optional[SyntheticSource] = None

    backend: Literal["knn", "forest"] = "knn"
    k: Optional[int] = Field(default=None, ge=1)
    k_grid: Tuple[int, ...] = (1, 2, 5, 10, 20, 50, 100)
    forest: ForestParams = Field(default_factory=ForestParams)
    mtry_grid: Optional[Tuple[int, ...]] = None
    val_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    standardize: Optional[bool] = None

    epsilons: Tuple[float, ...] = tuple(i / 10 for i in range(10))
    jitter: float = Field(default=1e-10, ge=0.0)
    split: SplitSpec = Field(default_factory=SplitSpec)
    repetitions: int = Field(default=100, ge=1)
    seed: int = Field(ge=0, le=SEED_MAX)

    @field_validator("epsilons")
    @classmethod
    def _epsilon_grid(cls, value):
        if not value:
            raise ValueError("epsilon grid is empty")
        if any(not (0.0 <= e < 1.0) for e in value):
            raise ValueError("epsilon grid must lie in [0, 1)")
        return value

    @field_validator("k_grid", "mtry_grid")
    @classmethod
    def _positive_grid(cls, value):
        if value is not None and (not value or min(value) < 1):
            raise ValueError("selection grids must be nonempty and positive")
        return value

    @model_validator(mode="after")
    def _one_source(self):
        if (self.data_path is None) == (self.synthetic is None):
            raise ValueError("exactly one of a data file or a synthetic model is required")
        if self.data_path is not None and not self.target:
            raise ValueError("a target column is required with a data file")
        return self

    @property
    def use_standardization(self) -> bool:
        if self.standardize is None:
            return self.backend == "knn"
        return self.standardize


class RunManifest(_Frozen):
    """Everything needed to reproduce one CLI run."""

    command: str
    version: str
    seed: int
    config: Dict[str, Any]

    def digest(self) -> str:
        return calculate_hash(canonical_json(self.model_dump(mode="json")).encode())

    def to_json(self) -> str:
        payload = self.model_dump(mode="json")
        payload["manifest_sha256"] = self.digest()
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"manifest is not valid JSON: {e}") from e
        recorded = payload.pop("manifest_sha256", None)
        manifest = build(cls, **payload)
        if recorded is not None and recorded != manifest.digest():
            raise ConfigError("manifest hash does not match its contents")
        return manifest


def build(model_cls, /, **kwargs):
    """Instantiate a pydantic model, reporting failures as one-line ConfigError."""
    try:
        return model_cls(**kwargs)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ())) or model_cls.__name__
        raise ConfigError(f"{where}: {first['msg']}") from e
