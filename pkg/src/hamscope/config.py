"""Run configuration: a YAML (or JSON) document validated by pydantic.

Unknown keys are rejected everywhere. Validation failures surface as
:class:`~hamscope.errors.ConfigError` carrying the dotted key path.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .bayes import HmcConfig
from .embed import TsneConfig
from .errors import ConfigError
from .hamfit import FitConfig, PolyHamiltonian
from .synth import SynthScenario


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class CoeffEntry(_Strict):
    i: int = Field(ge=0)
    j: int = Field(ge=0)
    value: float


class HamiltonianSpec(_Strict):
    max_degree: int = Field(2, ge=0, le=6)
    coeffs: list[CoeffEntry]

    def build(self) -> PolyHamiltonian:
        return PolyHamiltonian(self.max_degree, {(c.i, c.j): c.value for c in self.coeffs})


class ScenarioSpec(_Strict):
    hamiltonian: HamiltonianSpec
    gamma: tuple[float, float] = (0.0, 0.0)
    dt: float = Field(0.05, gt=0)
    steps: int = Field(400, ge=5)
    z0: tuple[float, float] = (1.0, 0.0)
    obs_noise_sigma: float = Field(0.0, ge=0)
    lift_dim: Optional[int] = Field(None, ge=2)
    baseline: float = 0.0
    seed: int = 0

    @field_validator("gamma")
    @classmethod
    def _drag_non_negative(cls, v: tuple[float, float]) -> tuple[float, float]:
        if min(v) < 0:
            raise ValueError("drag coefficients must be >= 0")
        return v

    def build(self) -> SynthScenario:
        return SynthScenario(
            self.hamiltonian.build(), self.gamma, self.dt, self.steps, self.z0,
            self.obs_noise_sigma, self.lift_dim, self.seed, self.baseline,
        )


class SynthSpec(_Strict):
    before: ScenarioSpec
    after: ScenarioSpec


class InputSpec(_Strict):
    path: Optional[str] = None
    format: Literal["long", "wide"] = "long"
    synth: Optional[SynthSpec] = None

    @model_validator(mode="after")
    def _one_source(self) -> "InputSpec":
        if (self.path is None) == (self.synth is None):
            raise ValueError("give exactly one of 'path' or 'synth'")
        return self


class PcaSpec(_Strict):
    d_pca: int = Field(50, ge=1)


class EmbeddingSpec(_Strict):
    method: Literal["pca_tsne", "pca_only", "identity"] = "pca_tsne"
    perplexity: float = Field(30.0, gt=0)
    learning_rate: float = Field(200.0, gt=0)
    n_iter: int = Field(1000, ge=1)
    seed: int = 42
    early_exaggeration: float = Field(12.0, gt=0)
    exaggeration_iters: int = Field(250, ge=0)
    init: Literal["pca", "random"] = "pca"

    def tsne(self, seed: int | None = None) -> TsneConfig:
        return TsneConfig(
            perplexity=self.perplexity,
            learning_rate=self.learning_rate,
            n_iter=self.n_iter,
            seed=self.seed if seed is None else seed,
            early_exaggeration=self.early_exaggeration,
            exaggeration_iters=self.exaggeration_iters,
            init=self.init,
        )


class SmoothingSpec(_Strict):
    window: int = Field(1, ge=1)

    @field_validator("window")
    @classmethod
    def _odd(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("window must be odd")
        return v


class FitSpec(_Strict):
    lam: float = Field(1e-3, ge=0, alias="lambda")
    solver: Literal["ridge_closed_form", "gradient_descent"] = "ridge_closed_form"
    gd_steps: int = Field(5000, gt=0)
    gd_learning_rate: float = Field(1e-2, gt=0)
    include_dissipation: bool = False
    max_degree: int = Field(2, ge=1, le=6)
    gauge: Literal["zero_mean_over_domain", "zero_at_origin"] = "zero_mean_over_domain"

    def build(self) -> FitConfig:
        return FitConfig(**self.model_dump())


class HmcSpec(_Strict):
    enabled: bool = False
    prior_sigma: float = Field(1.0, gt=0)
    noise_sigma: Optional[float] = Field(None, gt=0)
    leapfrog_steps: int = Field(20, ge=1)
    step_size: float = Field(0.05, gt=0)
    warmup: int = Field(500, ge=0)
    samples: int = Field(2000, ge=100)
    seed: int = 42
    target_accept: float = Field(0.75, gt=0, lt=1)

    def build(self, seed: int | None = None) -> HmcConfig:
        return HmcConfig(
            leapfrog_steps=self.leapfrog_steps,
            step_size=self.step_size,
            warmup=self.warmup,
            samples=self.samples,
            seed=self.seed if seed is None else seed,
            target_accept=self.target_accept,
        )


class DomainSpec(_Strict):
    z1_range: Optional[tuple[float, float]] = None
    z2_range: Optional[tuple[float, float]] = None
    grid_resolution: int = Field(101, ge=3)
    padding: float = Field(0.1, ge=0)

    @field_validator("grid_resolution")
    @classmethod
    def _odd(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("grid_resolution must be odd")
        return v


class ComparisonSpec(_Strict):
    mode: Literal["paper_literal", "dimensionless"] = "paper_literal"
    threshold: float = Field(0.07, ge=0)
    tau: float = Field(0.1, gt=0)


class PipelineConfig(_Strict):
    input: InputSpec
    event_time: Optional[Union[float, str]] = None
    normalization: Literal["zscore_per_segment", "global_zscore", "none"] = "zscore_per_segment"
    pca: PcaSpec = PcaSpec()
    embedding: EmbeddingSpec = EmbeddingSpec()
    smoothing: SmoothingSpec = SmoothingSpec()
    fit: FitSpec = FitSpec()
    hmc: HmcSpec = HmcSpec()
    domain: DomainSpec = DomainSpec()
    comparison: ComparisonSpec = ComparisonSpec()
    output_dir: str = "out"
    seed: Optional[int] = None  # overrides embedding.seed and hmc.seed when set

    @model_validator(mode="after")
    def _event_needed(self) -> "PipelineConfig":
        if self.input.path is not None and self.event_time is None:
            raise ValueError("event_time is required for file input")
        return self

    def digest(self) -> str:
        """SHA-256 of the canonical config; the output location is left out."""
        canonical = json.dumps(self.model_dump(mode="json", by_alias=True, exclude={"output_dir"}), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()


def _key_path(loc: tuple) -> str:
    return ".".join(str(p) for p in loc) or "<root>"


def parse_config(data: dict, base_dir: Path | None = None) -> PipelineConfig:
    try:
        cfg = PipelineConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ConfigError(_key_path(err["loc"]), err["msg"]) from None
    if base_dir is not None and cfg.input.path is not None and not Path(cfg.input.path).is_absolute():
        cfg.input.path = str(base_dir / cfg.input.path)
    return cfg


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from None
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"unparseable: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping")
    return parse_config(data, path.parent)
