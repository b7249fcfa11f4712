import hashlib
import json
import zlib
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from causalprompt.utils.Errors import DataError


def _split_csv(value):
    # key=value files carry lists as comma-separated strings
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


def derive_seed(seed: int, stage: str) -> int:
    """Derive a per-stage seed from the root seed, stable across platforms."""
    sequence = np.random.SeedSequence([int(seed), zlib.crc32(stage.encode("utf-8"))])
    return int(sequence.generate_state(1)[0])


class ConfigBase(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class MetricsConfig(ConfigBase):
    timeout_s: float = Field(4.0, gt=0)
    grace_s: float = Field(1.0, ge=0)
    memory_mb: int = Field(256, gt=0)
    interpreter: str = "python3"
    workers: int = Field(4, ge=1)
    codebleu_weights: Tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    bleu_max_n: int = Field(4, ge=1)
    bleu_smoothing_k: float = Field(1.0, ge=0)

    @field_validator("codebleu_weights", mode="before")
    @classmethod
    def _parse_weights(cls, value):
        return _split_csv(value)

    @field_validator("codebleu_weights")
    @classmethod
    def _check_weights(cls, value):
        if any(w < 0 for w in value) or abs(sum(value) - 1.0) > 1e-6:
            raise ValueError("codebleu weights must be nonnegative and sum to 1")
        return value


class LLMConfig(ConfigBase):
    endpoint: str = "https://api.openai.com/v1"
    model: str = "gpt-3.5-turbo"
    api_key_env: str = "OPENAI_API_KEY"
    max_inflight: int = Field(4, ge=1)
    retries: int = Field(3, ge=0)
    backoff_s: float = Field(1.0, ge=0)
    rephrase_temperature: float = 0.7
    # None leaves the provider default in place
    generation_temperature: Optional[float] = None
    n_solutions: int = Field(3, ge=1)
    max_tokens: int = Field(2000, gt=0)
    mock: bool = False


class DiscoveryConfig(ConfigBase):
    lambda_l1: float = Field(0.1, ge=0)
    edge_threshold: float = Field(0.3, ge=0)
    max_outer_iters: int = Field(100, ge=1)
    tolerance: float = Field(1e-8, gt=0)
    rho_max: float = Field(1e16, gt=0)
    seed: int = 0


class DmlConfig(ConfigBase):
    folds: int = Field(2, ge=2)
    repetitions: int = Field(1, ge=1)
    min_n: int = Field(50, ge=2)
    nuisance: str = "ridge"
    seed: int = 0

    @field_validator("nuisance")
    @classmethod
    def _check_nuisance(cls, value):
        if value not in ("ridge", "linear", "stumps"):
            raise ValueError("nuisance must be one of ridge, linear, stumps")
        return value


class AnalysisConfig(ConfigBase):
    top_metrics: int = Field(3, ge=1)
    top_features: int = Field(2, ge=1)
    negligible: float = Field(0.01, ge=0)
    min_n: int = Field(20, ge=5)
    test_fraction: float = Field(0.2, gt=0, lt=1)
    predictor: str = "ridge"
    seed: int = 0


class GaConfig(ConfigBase):
    population: int = Field(20, ge=2)
    generations: int = Field(30, ge=1)
    survivors: int = Field(5, ge=1)
    mutation_rate: float = Field(0.05, ge=0, le=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_survivors(self):
        if self.survivors > self.population:
            raise ValueError("survivors must not exceed population")
        return self


class PipelineConfig(ConfigBase):
    dataset: str = ""
    output_dir: str = "runs/default"
    features: List[str] = Field(default_factory=list)
    metric_names: List[str] = Field(default_factory=lambda: [
        "pass_rate", "run_err_rate", "timeout_rate", "syn_err",
        "gold_sim_CB", "gold_sim_B", "mut_sim_CB", "mut_sim_B", "black_count",
    ])
    meta_vars: List[str] = Field(default_factory=list)
    # JSON intention registry; empty keeps the built-in 12 intentions
    registry: str = ""
    objective: str = "gold_sim_B"
    correlation_alpha: float = Field(0.05, gt=0, le=1)
    combos_per_question: int = Field(2, ge=0)
    seed: int = 0
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    llm: LLMConfig = Field(default_factory=LLMConfig)
    discovery: DiscoveryConfig = Field(default_factory=DiscoveryConfig)
    dml: DmlConfig = Field(default_factory=DmlConfig)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)
    ga: GaConfig = Field(default_factory=GaConfig)

    @field_validator("features", "metric_names", "meta_vars", mode="before")
    @classmethod
    def _parse_lists(cls, value):
        return _split_csv(value)

    def seeded(self) -> "PipelineConfig":
        """Return a copy whose stage seeds all derive from the root seed."""
        update = {}
        for stage in ("discovery", "dml", "analysis", "ga"):
            section = getattr(self, stage).model_copy(update={"seed": derive_seed(self.seed, stage)})
            update[stage] = section
        return self.model_copy(update=update)

    def config_hash(self) -> str:
        # where results are written does not change them
        payload = json.dumps(self.model_dump(mode="json", exclude={"output_dir"}), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _nest(flat: Dict[str, str]) -> Dict[str, Union[str, dict]]:
    nested: Dict[str, Union[str, dict]] = {}
    for key, value in flat.items():
        if value is None:
            continue
        parts = key.strip().split(".")
        target = nested
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise DataError(f"config key '{key}' clashes with a scalar value")
        target[parts[-1]] = value
    return nested


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Dict[str, str]] = None) -> PipelineConfig:
    """
    Build a PipelineConfig from a key=value file plus overrides.

    Keys are field names; sections use a dotted prefix, e.g.
    ``discovery.lambda_l1=0.1``. Overrides win over the file.
    """
    flat: Dict[str, str] = {}
    if path is not None:
        if not Path(path).exists():
            raise DataError(f"config file not found: {path}")
        flat.update(dotenv_values(path))
    if overrides:
        flat.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return PipelineConfig.model_validate(_nest(flat))
    except ValueError as error:
        raise DataError(f"invalid configuration: {error}") from error
