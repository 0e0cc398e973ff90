"""Experiment configuration: YAML files validated by a strict schema."""
from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .exceptions import ConfigError
from .grid import _evaluate_entry, region_from_dict
from .pipeline import bump

EXPERIMENTS = ("operator", "forward", "dnmap", "extension", "frequency", "runge", "moments", "reconstruct", "suite")
RANDOMIZED = {"operator", "forward", "dnmap", "reconstruct", "suite"}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridBlock(_Strict):
    n: Literal[1, 2] = 1
    N: int = Field(ge=3)
    Lbox: float = Field(gt=0)
    bc: Literal["reflecting", "absorbing"] = "reflecting"


class OperatorBlock(_Strict):
    s: float = Field(gt=0, le=1)
    A: Union[str, Dict[str, Any]] = "identity"


class DomainBlock(_Strict):
    omega: Dict[str, Any]
    O1: Optional[Dict[str, Any]] = None
    O2: Optional[Dict[str, Any]] = None

    @field_validator("omega", "O1", "O2")
    @classmethod
    def _region(cls, v):
        if v is not None:
            try:
                region_from_dict(v)
            except Exception as exc:
                raise ValueError(str(exc)) from exc
        return v


class PotentialSpec(_Strict):
    kind: Literal["zero", "constant", "bump", "random", "expr"] = "zero"
    value: float = 0.0
    amplitude: float = 1.0
    center: List[float] = Field(default_factory=lambda: [0.0])
    width: float = Field(default=0.5, gt=0)
    low: float = 0.0
    high: float = 1.0
    seed: Optional[int] = None
    expr: Optional[str] = None

    @model_validator(mode="after")
    def _complete(self):
        if self.kind == "random" and self.seed is None:
            raise ValueError("random potentials need a seed")
        if self.kind == "expr" and not self.expr:
            raise ValueError("expr potentials need an expression")
        return self


class ParamsBlock(_Strict):
    seed: Optional[int] = None
    trials: int = Field(default=10, ge=1)
    radii: Optional[List[float]] = None
    alphas: Optional[List[float]] = None
    J: int = Field(default=256, ge=8)
    Ymax: Optional[float] = None
    gamma: Optional[float] = None
    probes: int = Field(default=4, ge=1)
    alpha: float = Field(default=1e-8, gt=0)
    alpha_q: float = Field(default=0.0, ge=0)
    max_iter: int = Field(default=25, ge=0)
    noise: float = Field(default=0.0, ge=0)
    partial_data: bool = False
    quadrature_nodes: int = Field(default=400, ge=10)


class ExperimentBlock(_Strict):
    name: Optional[Literal[EXPERIMENTS]] = None
    params: ParamsBlock = Field(default_factory=ParamsBlock)


class ExperimentConfig(_Strict):
    grid: GridBlock
    operator: OperatorBlock
    domain: Optional[DomainBlock] = None
    potentials: Dict[str, PotentialSpec] = Field(default_factory=dict)
    experiment: ExperimentBlock = Field(default_factory=ExperimentBlock)
    output: Optional[Dict[str, str]] = None

    @field_validator("potentials")
    @classmethod
    def _names(cls, v):
        bad = set(v) - {"q", "q1", "q2", "q_true"}
        if bad:
            raise ValueError(f"unknown potential names {sorted(bad)}")
        return v


NEEDS_DOMAIN = {"forward", "dnmap", "runge", "moments", "reconstruct"}


def load_config(path, experiment=None, seed=None):
    """Read and validate a YAML config.

    ``experiment`` (from the command line) must agree with the file when the
    file names one; ``seed`` overrides the file's seed. Raises
    :class:`ConfigError` for every problem.
    """
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    return parse_config(raw, experiment, seed)


def parse_config(raw, experiment=None, seed=None):
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    name = experiment or cfg.experiment.name
    if name is None:
        raise ConfigError("no experiment named")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}")
    if cfg.experiment.name is not None and experiment is not None and cfg.experiment.name != experiment:
        raise ConfigError(f"config is for {cfg.experiment.name!r}, not {experiment!r}")
    params = cfg.experiment.params
    if seed is not None:
        params = params.model_copy(update={"seed": int(seed)})
    if name in RANDOMIZED and params.seed is None:
        raise ConfigError(f"experiment {name!r} is randomized and needs a seed")
    if name in NEEDS_DOMAIN and cfg.domain is None:
        raise ConfigError(f"experiment {name!r} needs a domain block")
    if cfg.operator.s == 1.0 and name in {"extension", "frequency"}:
        raise ConfigError("the extension problem needs s < 1")
    if name == "frequency" and cfg.grid.n != 1:
        raise ConfigError("the frequency experiment profiles (x, y) fields and needs n = 1")
    exp = ExperimentBlock(name=name, params=params)
    return cfg.model_copy(update={"experiment": exp})


def potential_values(spec, grid, partition):
    """Interior potential values from a :class:`PotentialSpec`."""
    I = partition.interior
    X = grid.coords[I]
    if spec is None or spec.kind == "zero":
        return np.zeros(I.size)
    if spec.kind == "constant":
        return np.full(I.size, spec.value)
    if spec.kind == "bump":
        c = np.zeros(grid.n)
        c[: len(spec.center)] = spec.center[: grid.n]
        return bump(X, c, spec.width, spec.amplitude)
    if spec.kind == "random":
        rng = np.random.default_rng(spec.seed)
        return rng.uniform(spec.low, spec.high, I.size)
    if spec.kind == "expr":
        return _evaluate_entry(spec.expr, X)
    raise ConfigError(f"unknown potential kind {spec.kind!r}")
