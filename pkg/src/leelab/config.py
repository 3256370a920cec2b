"""Run configuration: JSON file plus LEELAB_<SECTION>__<FIELD> environment overrides.

Physical inputs are in natural units (hbar = c = 1); energies written to CSV
and JSON outputs are divided by m and labelled "(m)".
"""
from __future__ import annotations

import json
import math
import os
import re
import typing
from pathlib import Path
from typing import Literal, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigurationError
from .manifold import ManifoldSpec
from .principal import ModelParams

ENV_PREFIX = "LEELAB_"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class ManifoldConfig(_Section):
    kind: Literal["torus2", "torus3", "sphere2"]
    lengths: Optional[list[float]] = None
    radius: Optional[float] = None

    @model_validator(mode="after")
    def _geometry(self):
        if self.kind == "sphere2":
            if self.radius is None:
                raise ValueError("radius: required for sphere2")
            if not self.radius > 0:
                raise ValueError("radius: must be > 0")
        else:
            want = 2 if self.kind == "torus2" else 3
            if self.lengths is None:
                raise ValueError(f"lengths: required for {self.kind} ({want} side lengths)")
            if len(self.lengths) != want or not all(L > 0 for L in self.lengths):
                raise ValueError(f"lengths: {self.kind} needs {want} positive side lengths")
        return self

    def to_spec(self) -> ManifoldSpec:
        if self.kind == "sphere2":
            return ManifoldSpec.sphere2(self.radius)
        return ManifoldSpec(self.kind, tuple(self.lengths))


class ParamsConfig(_Section):
    m: float = Field(1.0, gt=0)
    mu: float = 0.5
    lam: float = Field(1.0, ge=0, alias="lambda")
    a: Optional[list[float]] = None
    n: int = Field(1, ge=0)

    @model_validator(mode="after")
    def _mass(self):
        if not self.m > self.mu:
            raise ValueError(f"mu: need m > mu (got m={self.m}, mu={self.mu})")
        return self


class TruncationConfig(_Section):
    sigma_max: float = Field(60.0, gt=0, description="one-particle pool cutoff; also the Fock budget h0 <= n m + sigma_max/2m")
    energy_cutoff: Optional[float] = Field(None, gt=0, description="override of the Fock energy cutoff")
    sigma_max_k1: float = Field(200.0, gt=0, description="internal cutoff of the K1 sum and of the creation pool")
    k1_tail: bool = False
    max_dim: int = Field(250_000, gt=0)

    @model_validator(mode="after")
    def _order(self):
        if self.sigma_max_k1 < self.sigma_max:
            raise ValueError("sigma_max_k1: must be >= sigma_max")
        return self


class EGrid(_Section):
    start: float
    stop: float
    points: int = Field(20, ge=2)


class SolverConfig(_Section):
    tol: float = Field(1e-9, gt=0)
    floor: Optional[float] = None
    newton: bool = True
    E_grid: Optional[EGrid] = None


class SweepConfig(_Section):
    parameter: Literal["E", "lambda", "cutoff"] = "E"
    values: Optional[list[float]] = None
    E: Optional[float] = Field(None, description="fixed energy for lambda sweeps; default n m + mu")


class OutputConfig(_Section):
    directory: str = "leelab-out"
    formats: list[Literal["csv", "json"]] = ["csv", "json"]
    wavefunction_points: int = Field(256, ge=1)


class ValidationConfig(_Section):
    checks: Optional[list[str]] = None
    eps_ladder: Optional[list[float]] = None
    cutoff_ladder: Optional[list[float]] = None


class RunConfig(_Section):
    manifold: ManifoldConfig
    params: ParamsConfig = ParamsConfig()
    truncation: TruncationConfig = TruncationConfig()
    solver: SolverConfig = SolverConfig()
    sweep: SweepConfig = SweepConfig()
    output: OutputConfig = OutputConfig()
    validation: ValidationConfig = ValidationConfig()
    seed: int = 0
    jobs: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _point(self):
        if self.params.a is not None and len(self.params.a) != (3 if self.manifold.kind == "torus3" else 2):
            raise ValueError("params.a: needs one coordinate per manifold dimension")
        return self

    # -- derived objects ----------------------------------------------------
    def spec(self) -> ManifoldSpec:
        return self.manifold.to_spec()

    def model_params(self) -> ModelParams:
        spec = self.spec()
        p = self.params
        a = tuple(p.a) if p.a is not None else (0.0,) * spec.dim
        return ModelParams(spec, m=p.m, mu=p.mu, lam=p.lam, a=a, n=p.n)

    def energy_cutoff(self) -> float:
        t, p = self.truncation, self.params
        if t.energy_cutoff is not None:
            return t.energy_cutoff
        return p.n * p.m + t.sigma_max / (2 * p.m)

    def floor(self) -> float:
        p = self.params
        return self.solver.floor if self.solver.floor is not None else p.n * p.m + p.mu - 50 * p.m

    def dump(self) -> dict:
        return self.model_dump(mode="json", by_alias=True)


def json_schema() -> dict:
    return RunConfig.model_json_schema(by_alias=True)


def _format_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = [str(x) for x in err["loc"]]
        msg = err["msg"].removeprefix("Value error, ")
        # model-level validators prefix their message with the offending field
        head, sep, rest = msg.partition(": ")
        if sep and re.fullmatch(r"[A-Za-z_][\w.]*", head):
            loc.append(head)
            msg = rest
        parts.append(f"{'.'.join(loc) or '<root>'}: {msg}")
    return "; ".join(parts)


def _parse_env_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _nested_model(annotation):
    """The BaseModel class inside an annotation such as Optional[EGrid], if any."""
    if isinstance(annotation, type) and issubclass(annotation, BaseModel):
        return annotation
    for arg in typing.get_args(annotation):
        found = _nested_model(arg)
        if found is not None:
            return found
    return None


def _resolve_key(model, part: str) -> tuple[str, type | None]:
    if model is not None:
        for name, info in model.model_fields.items():
            key = info.alias or name
            if part.lower() in (key.lower(), name.lower()):
                return key, _nested_model(info.annotation)
    return part.lower(), None


def apply_env_overrides(data: dict, env: Mapping[str, str]) -> dict:
    """LEELAB_PARAMS__LAMBDA=0.5 sets data['params']['lambda']; top-level keys use LEELAB_SEED etc.

    Values are parsed as JSON when possible, so lists and numbers keep their type.
    """
    out = json.loads(json.dumps(data))
    for var in sorted(env):
        if not var.startswith(ENV_PREFIX):
            continue
        parts = [p for p in var[len(ENV_PREFIX):].split("__") if p]
        if not parts:
            continue
        node, model, path = out, RunConfig, []
        for p in parts[:-1]:
            key, model = _resolve_key(model, p)
            path.append(key)
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"{'.'.join(path)}: cannot override inside a non-object value")
        key, _ = _resolve_key(model, parts[-1])
        node[key] = _parse_env_value(env[var])
    return out


def parse_config(data: dict, env: Mapping[str, str] | None = None) -> RunConfig:
    if env is not None:
        data = apply_env_overrides(data, env)
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(_format_error(exc)) from None
    for v in (cfg.truncation.sigma_max, cfg.truncation.sigma_max_k1, cfg.params.m, cfg.params.mu):
        if not math.isfinite(v):
            raise ConfigurationError("non-finite numeric value in configuration")
    return cfg


def load_config(path: str | os.PathLike, env: Mapping[str, str] | None = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top-level JSON value must be an object")
    return parse_config(data, os.environ if env is None else env)
