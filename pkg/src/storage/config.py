"""Experiment configuration.

JSON experiment files are validated into :class:`ExperimentConfig`, a tree of
pydantic models. Paths inside a configuration (``csv:<path>`` densities and
measures, ``output_dir``) are resolved against the directory of the file they
came from.

Example
-------
>>> config = ExperimentConfig.model_validate(
...     {"command": "cell-problem", "model": {"kind": "wfr"}}
... )
>>> config.grid.nx, config.model.to_model().kind.value
(512, 'wfr')
"""

import json
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from src.calculators.entropy_models import EntropyModel, ModelKind
from src.calculators.errors import InvalidArgumentError
from src.measures.models import Domain

Command = Literal[
    "transport", "quantize", "cell-problem", "asymptotic-density", "sweep"
]

DENSITY_KINDS = ("uniform", "gaussian-bump")
CSV_PREFIX = "csv:"
RANDOM_PREFIX = "random:"
PRESET_PREFIX = "preset:"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSpec(_Section):
    """Transport model and length scale."""

    kind: str = "ghk"
    epsilon: float = Field(default=1.0, gt=0.0)

    @field_validator("kind")
    @classmethod
    def _known_kind(cls, value: str) -> str:
        name = value.strip().lower()
        if name not in {k.value for k in ModelKind}:
            raise ValueError(
                f"unknown model '{value}', expected one of w2, ghk, wfr, qr"
            )
        return name

    def to_model(self) -> EntropyModel:
        """Build the :class:`EntropyModel`."""
        return EntropyModel.parse(self.kind, self.epsilon)


class GridSpec(_Section):
    """Raster of the diffuse measure ``μ``."""

    domain: List[float] = Field(default_factory=lambda: [0.0, 1.0, 0.0, 1.0])
    nx: int = Field(default=512, ge=1)
    ny: int = Field(default=512, ge=1)
    density: str = "uniform"
    level: float = Field(default=1.0, ge=0.0)

    @field_validator("domain")
    @classmethod
    def _four_bounds(cls, value: List[float]) -> List[float]:
        if len(value) != 4:
            raise ValueError("domain must be [x_min, x_max, y_min, y_max]")
        Domain(*value)
        return value

    @field_validator("density")
    @classmethod
    def _density_source(cls, value: str) -> str:
        if value in DENSITY_KINDS or (value.startswith(CSV_PREFIX) and len(value) > 4):
            return value
        raise ValueError("density must be 'uniform', 'gaussian-bump' or 'csv:<path>'")

    def to_domain(self) -> Domain:
        """Build the :class:`Domain`."""
        return Domain(*self.domain)


class InlineMeasure(_Section):
    """Sites and masses written directly in the configuration."""

    points: List[List[float]]
    masses: List[float]

    @model_validator(mode="after")
    def _matching_lengths(self) -> "InlineMeasure":
        if len(self.points) != len(self.masses):
            raise ValueError("points and masses must have the same length")
        if any(len(p) != 2 for p in self.points):
            raise ValueError("every point needs two coordinates")
        return self


class SolverSpec(_Section):
    """Iteration limits, tolerances and the sampling seed."""

    method: Literal["lloyd", "bfgs"] = "lloyd"
    max_iter: int = Field(default=500, ge=1)
    grad_tol: float = Field(default=1e-7, gt=0.0)
    gap_tol: float = Field(default=1e-4, gt=0.0)
    marginal_tol: float = Field(default=1e-3, gt=0.0)
    seed: int = 0
    num_points: Optional[int] = Field(default=None, ge=1)
    max_evaluations: Optional[int] = Field(default=None, ge=1)


class AsymptoticSpec(_Section):
    """Cell-problem table range and the target ``P``."""

    P: float = Field(default=1.0, gt=0.0)
    z_min: float = Field(default=1e-4, gt=0.0)
    z_max: float = Field(default=1e4, gt=0.0)
    num_samples: int = Field(default=400, ge=2)

    @model_validator(mode="after")
    def _ordered_range(self) -> "AsymptoticSpec":
        if self.z_min >= self.z_max:
            raise ValueError("z_min must be smaller than z_max")
        return self


class SweepSpec(_Section):
    """Parameter varied by the ``sweep`` command.

    ``epsilon`` repeats a transport solve (``target = "transport"``) or a
    quantization with ``solver.num_points`` sites (``target = "quantize"``).
    ``epsilon_points`` quantizes with ``M = round(scaled_points / ε²)`` sites so
    that ``ε²M`` stays fixed. ``P`` recomputes the asymptotic density.
    """

    parameter: Literal["epsilon", "P", "epsilon_points"] = "epsilon"
    target: Literal["transport", "quantize"] = "transport"
    values: List[float] = Field(min_length=1)
    scaled_points: Optional[float] = Field(default=None, gt=0.0)

    @field_validator("values")
    @classmethod
    def _positive(cls, values: List[float]) -> List[float]:
        if any(v <= 0.0 for v in values):
            raise ValueError("sweep values must be positive")
        return values

    @model_validator(mode="after")
    def _paired_scale(self) -> "SweepSpec":
        if self.parameter == "epsilon_points":
            if self.target != "quantize":
                raise ValueError("an epsilon_points sweep needs target quantize")
            if self.scaled_points is None:
                raise ValueError("an epsilon_points sweep needs scaled_points")
        return self


class ExperimentConfig(_Section):
    """A complete experiment: command, model, data and solver settings."""

    command: Command
    model: ModelSpec = Field(default_factory=ModelSpec)
    grid: GridSpec = Field(default_factory=GridSpec)
    nu: Optional[Union[InlineMeasure, str]] = None
    solver: SolverSpec = Field(default_factory=SolverSpec)
    asymptotic: AsymptoticSpec = Field(default_factory=AsymptoticSpec)
    sweep: Optional[SweepSpec] = None
    output_dir: str = "output"

    @field_validator("nu")
    @classmethod
    def _measure_source(
        cls, value: Optional[Union[InlineMeasure, str]]
    ) -> Optional[Union[InlineMeasure, str]]:
        if isinstance(value, str):
            if value.startswith(RANDOM_PREFIX):
                parts = value.split(":")
                numeric = all(p.lstrip("-").isdigit() for p in parts[1:])
                if len(parts) != 3 or not numeric:
                    raise ValueError("random measures are written 'random:<M>:<seed>'")
            elif not value.startswith((CSV_PREFIX, PRESET_PREFIX)):
                raise ValueError(
                    "nu must be inline, 'random:<M>:<seed>', 'csv:<path>' "
                    "or 'preset:<name>'"
                )
        return value

    @model_validator(mode="after")
    def _command_requirements(self) -> "ExperimentConfig":
        if self.command == "transport" and self.nu is None:
            raise ValueError("the transport command needs a discrete measure 'nu'")
        if self.command == "quantize" and self.solver.num_points is None:
            raise ValueError("the quantize command needs solver.num_points")
        if self.command == "sweep":
            if self.sweep is None:
                raise ValueError("the sweep command needs a 'sweep' section")
            sweep = self.sweep
            transport = sweep.parameter == "epsilon" and sweep.target == "transport"
            if transport and self.nu is None:
                raise ValueError("an epsilon sweep needs a discrete measure 'nu'")
            fixed_count = sweep.parameter == "epsilon" and sweep.target == "quantize"
            if fixed_count and self.solver.num_points is None:
                raise ValueError("a quantize sweep needs solver.num_points")
        return self


def _resolve(source: str, prefix: str, base_dir: Path) -> str:
    if not source.startswith(prefix):
        return source
    path = Path(source[len(prefix):]).expanduser()
    if not path.is_absolute():
        path = base_dir / path
    return f"{prefix}{path}"


def resolve_paths(config: ExperimentConfig, base_dir: Path) -> ExperimentConfig:
    """Make CSV sources and the output directory absolute with respect to ``base_dir``."""
    grid = config.grid.model_copy(
        update={"density": _resolve(config.grid.density, CSV_PREFIX, base_dir)}
    )
    nu = config.nu
    if isinstance(nu, str):
        nu = _resolve(nu, CSV_PREFIX, base_dir)
    output = Path(config.output_dir).expanduser()
    if not output.is_absolute():
        output = base_dir / output
    return config.model_copy(update={"grid": grid, "nu": nu, "output_dir": str(output)})


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read, validate and resolve an experiment file.

    Raises
    ------
    FileNotFoundError
        If the file does not exist
    InvalidArgumentError
        If it is not valid JSON or fails validation
    """
    source = Path(path)
    text = source.read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(
            f"Invalid config: {source}. Must be JSON ({exc})."
        ) from exc
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise InvalidArgumentError(f"Invalid config: {source}. {exc}") from exc
    return resolve_paths(config, source.resolve().parent)
