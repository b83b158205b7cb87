"""
Run configuration: a strict YAML schema validated with pydantic.

Every section rejects unknown keys.  Validation errors are re-raised as
:class:`ConfigError` whose message lists the dotted path of each offending key.
"""

from __future__ import annotations

from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .forcing import ForcingSpec, ModalProfile, random_forcing
from .integrator import IntegratorConfig
from .periodic import parse_acceleration
from .spectral import GridSpec, PhysicalParams

__all__ = [
    "ConfigError",
    "ProfileConfig",
    "RandomForcingConfig",
    "ForcingConfig",
    "SolverConfig",
    "InitialConfig",
    "OutputConfig",
    "SweepConfig",
    "RunConfig",
    "parse_config",
    "emit_config",
    "load_config",
]


class ConfigError(ValueError):
    """Invalid configuration document."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


Number = float | tuple[float, float]


def _cplx(x: Number) -> complex:
    return complex(x[0], x[1]) if isinstance(x, tuple) else complex(x)


class ProfileConfig(_Strict):
    """One modal profile; complex numbers are written as ``[re, im]``."""

    wave_index: tuple[int, ...]
    amplitude: tuple[Number, ...]
    temporal: tuple[Number, ...] = (1.0,)

    def build(self) -> ModalProfile:
        return ModalProfile(
            self.wave_index,
            tuple(_cplx(a) for a in self.amplitude),
            tuple(_cplx(c) for c in self.temporal),
        )

    @model_validator(mode="after")
    def _check(self) -> "ProfileConfig":
        self.build()  # surfaces ModalProfile's own invariants as validation errors
        return self


class RandomForcingConfig(_Strict):
    seed: int = Field(ge=0, lt=2**64)
    amplitude: float = Field(default=1.0, ge=0.0)
    harmonic_cutoff: int = Field(default=2, ge=0)
    wave_cutoff: int = Field(default=4, ge=1)


class ForcingConfig(_Strict):
    profiles: tuple[ProfileConfig, ...] = ()
    random: RandomForcingConfig | None = None
    scale: float = 1.0

    @model_validator(mode="after")
    def _exclusive(self) -> "ForcingConfig":
        if self.profiles and self.random is not None:
            raise ValueError("give either 'profiles' or 'random', not both")
        return self

    def build(self, grid: GridSpec, period_T: float) -> ForcingSpec:
        if self.random is not None:
            rf = self.random
            spec = random_forcing(grid, period_T, rf.seed, rf.amplitude, rf.harmonic_cutoff, rf.wave_cutoff)
        else:
            spec = ForcingSpec(period_T, tuple(p.build() for p in self.profiles))
        return spec.scaled(self.scale) if self.scale != 1.0 else spec


class SolverConfig(_Strict):
    mode: Literal["periodic", "linear", "picard", "verify", "sweep"] = "periodic"
    tol: float = Field(default=1e-9, gt=0.0)
    max_iter: int = Field(default=50, ge=1)
    acceleration: str = "none"
    harmonic_cutoff: int | None = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _accel(self) -> "SolverConfig":
        parse_acceleration(self.acceleration)
        return self


class InitialConfig(_Strict):
    """Initial guess: zero unless a seed is given (random field of H-norm ``h_norm``)."""

    seed: int | None = Field(default=None, ge=0)
    h_norm: float = Field(default=1.0, ge=0.0)


class OutputConfig(_Strict):
    directory: str = "cbfed_out"
    diagnostics: str = "diagnostics.csv"
    manifest: str = "manifest.json"
    checkpoint: str = "final_state.cbfd"


class SweepConfig(_Strict):
    """Cartesian sweep; ``amplitude`` multiplies the configured forcing."""

    beta: tuple[float, ...] = ()
    gamma: tuple[float, ...] = ()
    amplitude: tuple[float, ...] = ()


class RunConfig(_Strict):
    params: PhysicalParams
    grid: GridSpec
    integrator: IntegratorConfig = IntegratorConfig()
    forcing: ForcingConfig = ForcingConfig()
    solver: SolverConfig = SolverConfig()
    initial: InitialConfig = InitialConfig()
    output: OutputConfig = OutputConfig()
    sweep: SweepConfig | None = None

    @model_validator(mode="before")
    @classmethod
    def _inherit_geometry(cls, data):
        # the grid defaults its dimension and box to the physical ones
        if isinstance(data, dict) and isinstance(data.get("params"), dict) and isinstance(data.get("grid"), dict):
            grid = dict(data["grid"])
            for key in ("dim", "box_length"):
                if key in data["params"] and key not in grid:
                    grid[key] = data["params"][key]
            data = {**data, "grid": grid}
        return data

    @model_validator(mode="after")
    def _consistent(self) -> "RunConfig":
        if not self.grid.matches(self.params):
            raise ValueError("grid dim/box_length must equal params dim/box_length")
        for prof in self.forcing.profiles:
            if len(prof.wave_index) != self.grid.dim:
                raise ValueError(f"forcing wave index {prof.wave_index} does not match dim={self.grid.dim}")
        return self

    def build_forcing(self) -> ForcingSpec:
        return self.forcing.build(self.grid, self.params.period_T)


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"].removeprefix("Value error, ")
        lines.append(f"{path}: {msg}")
    return "invalid configuration:\n  " + "\n  ".join(lines)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML configuration document."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping at the top level")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def emit_config(cfg: RunConfig) -> str:
    """YAML text that :func:`parse_config` maps back to an equal config."""
    data = cfg.model_dump(mode="json")
    return yaml.safe_dump(data, sort_keys=False)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
