"""Experiment configuration file schema.

A config is a YAML (or JSON) mapping; unknown keys anywhere are rejected so
that a misspelt hyperparameter fails loudly instead of silently falling
back to its default. Example::

    seed: 0
    method: fed_lsgan          # fed_lsgan | central_lsgan | central_gan | copula
    out_dir: runs/demo
    data:
      synthetic:
        n_days: 600
        sites:
          - {site_id: wind0, kind: wind, mix: 0.9}
          - {site_id: solar0, kind: solar, mix: 0.7}
    net: {noise_dim: 16, g_channels: [64, 32], d_channels: [32, 64]}
    federation: {W: 300, K: 50, E: 1.0, m: 32}
    evaluation: {n_generated: 200, k: 9, max_lag: 48}
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .data import SiteParams
from .federation import FederationConfig
from .genmodel import NetConfig
from .metrics import EvalSpec

METHODS = ("fed_lsgan", "central_lsgan", "central_gan", "copula")


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SiteSpec(_Strict):
    site_id: str
    kind: Literal["wind", "solar"] = "wind"
    capacity: float = Field(20.0, gt=0)
    mix: float = Field(0.7, ge=-1, le=1)
    persistence_hours: float = Field(6.0, gt=0)
    mean_speed: float = 8.0
    speed_sd: float = Field(3.5, gt=0)
    cut_in: float = 3.0
    rated: float = 13.0
    ramp_rate_per_day: float = Field(0.5, ge=0)
    ramp_size: float = Field(1.2, ge=0)
    sunrise: float = Field(6.0, ge=0, lt=24)
    sunset: float = Field(18.0, gt=0, le=24)
    cloud_depth: float = Field(0.8, ge=0, le=1)
    cloud_hours: float = Field(3.0, gt=0)

    def to_params(self, index: int) -> SiteParams:
        return SiteParams(index=index, **self.model_dump())


class SyntheticSpec(_Strict):
    n_days: int = Field(600, ge=1)
    seed: Optional[int] = None
    sites: list[SiteSpec] = Field(min_length=1)


class DataSpec(_Strict):
    csv_dir: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.csv_dir is None) == (self.synthetic is None):
            raise ValueError("data needs exactly one of csv_dir or synthetic")
        return self


class NetSpec(_Strict):
    noise_dim: int = Field(100, ge=1)
    g_channels: tuple[int, int] = (128, 64)
    d_channels: tuple[int, int] = (64, 128)
    leaky_slope: float = Field(0.2, ge=0)
    conditional: bool = False


class FederationSpec(_Strict):
    W: int = Field(1000, ge=1)
    K: int = Field(100, ge=1)
    E: float = Field(1.0, gt=0, le=1)
    m: int = Field(32, ge=1)
    lr: float = Field(2e-4, gt=0)
    beta1: float = Field(0.5, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    workers: int = Field(1, ge=1)


class EvaluationSpec(_Strict):
    n_generated: int = Field(200, ge=2)
    k: int = Field(9, ge=1)
    leads: list[int] = Field(default_factory=lambda: list(range(0, 576, 12)))
    max_lag: int = Field(48, ge=0)


class CopulaSpec(_Strict):
    profile_points: Optional[int] = None


class ExperimentConfig(_Strict):
    seed: int = Field(0, ge=0)
    method: Literal["fed_lsgan", "central_lsgan", "central_gan", "copula"] = "fed_lsgan"
    out_dir: str = "runs/default"
    data: DataSpec
    net: NetSpec = NetSpec()
    federation: FederationSpec = FederationSpec()
    evaluation: EvaluationSpec = EvaluationSpec()
    copula: CopulaSpec = CopulaSpec()

    def net_config(self, n_labels: int) -> NetConfig:
        spec = self.net
        return NetConfig(
            noise_dim=spec.noise_dim,
            g_channels=spec.g_channels,
            d_channels=spec.d_channels,
            leaky_slope=spec.leaky_slope,
            conditional=spec.conditional,
            n_labels=n_labels if spec.conditional else 0,
        )

    def fed_config(self) -> FederationConfig:
        f = self.federation
        return FederationConfig(W=f.W, K=f.K, E=f.E, m=f.m, lr=f.lr, beta1=f.beta1,
                                beta2=f.beta2, seed=self.seed, workers=f.workers)

    def eval_spec(self) -> EvalSpec:
        e = self.evaluation
        return EvalSpec(n_generated=e.n_generated, k=e.k, leads=tuple(e.leads),
                        max_lag=e.max_lag, seed=self.seed)

    def resolved(self) -> dict:
        return self.model_dump(mode="json")


def parse_config(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.data.csv_dir is not None and base_dir is not None:
        p = Path(cfg.data.csv_dir)
        if not p.is_absolute():
            cfg.data.csv_dir = str((base_dir / p).resolve())
    if cfg.data.csv_dir is not None and not Path(cfg.data.csv_dir).is_dir():
        raise ConfigError(f"data directory not found: {cfg.data.csv_dir}")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(raw, path.parent)
