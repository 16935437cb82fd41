"""
Simulation Configuration Loader

Run configurations are sectioned key-value documents:

    [grid]          n, dims, box_lengths
    [params]        the SimParams fields
    [initial_data]  generator and its arguments
    [output]        directory and file switches
    [checks]        analysis checks to apply after the run

Values are ints, floats, booleans (true/false), bare strings, or comma lists;
fields declared as strings take the token verbatim (prefix = 001 stays "001").
Lines starting with '#' or ';' are comments. Every section is validated by a
pydantic model; all errors are reported together with their line numbers.
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Type, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from core.dynamics import SimParams
from core.errors import ConfigError
from core.spectral import SpectralGrid

SECTIONS = ("grid", "params", "initial_data", "output", "checks")

DEFAULT_CONFIG_TEXT = """\
# one-dimensional small-data HLLG run on a box of eight periods
[grid]
n = 1
dims = 512
box_lengths = 50.26548245743669

[params]
equation = HLLG
damping = 1.0
dt = 0.001
T = 1.0
scheme = ETDRK2
dealias = cubic
sample_every = 10

[initial_data]
kind = perturbation
amplitude = 0.05
kmax = 2
seed = 0

[output]
directory = output
prefix = run

[checks]
energy_identity = true
monotone = true
l2_growth = true
"""


class GridSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = 1
    dims: Tuple[int, ...] = (512,)
    box_lengths: Tuple[float, ...] = (2 * np.pi,)

    @field_validator("dims", "box_lengths", mode="before")
    @classmethod
    def as_tuple(cls, v: Any) -> Any:
        return v if isinstance(v, (list, tuple)) else (v,)

    @model_validator(mode="after")
    def broadcast(self) -> "GridSection":
        if len(self.dims) == 1 and self.n > 1:
            self.dims = self.dims * self.n
        if len(self.box_lengths) == 1 and self.n > 1:
            self.box_lengths = self.box_lengths * self.n
        return self

    def to_grid(self) -> SpectralGrid:
        return SpectralGrid(n=self.n, dims=self.dims, box_lengths=self.box_lengths)


class ParamsSection(SimParams):
    model_config = ConfigDict(frozen=True, extra="forbid")

    @field_validator("seminorm_orders", mode="before")
    @classmethod
    def orders_as_tuple(cls, v: Any) -> Any:
        return v if v is None or isinstance(v, (list, tuple)) else (v,)

    def to_params(self) -> SimParams:
        return SimParams(**self.model_dump())


class InitialDataSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["perturbation", "great_circle", "constant"] = "perturbation"
    amplitude: float = 0.05
    kmax: int = 2
    seed: int = 0
    components: int = 3
    base_point: Optional[Tuple[float, ...]] = None
    degree: int = 0

    @field_validator("amplitude")
    @classmethod
    def validate_amplitude(cls, v: float) -> float:
        if v < 0:
            raise ValueError("amplitude must be ≥ 0")
        return v

    @field_validator("components")
    @classmethod
    def validate_components(cls, v: int) -> int:
        if v < 2:
            raise ValueError("target sphere needs at least 2 components")
        return v

    @field_validator("base_point", mode="before")
    @classmethod
    def point_as_tuple(cls, v: Any) -> Any:
        return v if v is None or isinstance(v, (list, tuple)) else (v,)

    @model_validator(mode="after")
    def validate_base_point(self) -> "InitialDataSection":
        if self.base_point is not None:
            if len(self.base_point) != self.components:
                raise ValueError(f"base_point needs {self.components} entries")
            if abs(np.linalg.norm(self.base_point) - 1.0) > 1e-12:
                raise ValueError("base_point must be a unit vector")
        if self.kind == "great_circle" and self.components != 3:
            raise ValueError("great_circle data lives on S^2 (components = 3)")
        return self


class OutputSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: str = "output"
    prefix: str = "run"
    timeseries: bool = True
    snapshot_final: bool = True


class ChecksSection(BaseModel):
    """Analysis checks; all disabled unless switched on"""

    model_config = ConfigDict(extra="forbid")

    energy_identity: bool = False
    monotone: bool = False
    l2_growth: bool = False
    decay: bool = False
    stability: bool = False
    stability_delta0: float = 1e-6

    @field_validator("stability_delta0")
    @classmethod
    def validate_delta(cls, v: float) -> float:
        if v < 0:
            raise ValueError("stability_delta0 must be ≥ 0")
        return v

    def enabled(self) -> List[str]:
        """Enabled trajectory checks (stability is run separately)"""
        names = ("energy_identity", "monotone", "l2_growth", "decay")
        return [name for name in names if getattr(self, name)]


class Config(BaseModel):
    """Validated run configuration"""

    grid: SpectralGrid
    params: SimParams
    initial_data: InitialDataSection = InitialDataSection()
    output: OutputSection = OutputSection()
    checks: ChecksSection = ChecksSection()


SECTION_MODELS: Dict[str, Type[BaseModel]] = {
    "grid": GridSection,
    "params": ParamsSection,
    "initial_data": InitialDataSection,
    "output": OutputSection,
    "checks": ChecksSection,
}


def _parse_scalar(token: str) -> Any:
    lowered = token.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        return token


def _parse_value(raw: str) -> Any:
    if "," in raw:
        return [_parse_scalar(item.strip()) for item in raw.split(",") if item.strip()]
    return _parse_scalar(raw)


def _section_values(model: Type[BaseModel], entries: Dict[str, Tuple[str, int]]) -> Dict[str, Any]:
    """Typed values for a section; str fields keep their token verbatim"""
    text_fields = {name for name, info in model.model_fields.items() if info.annotation is str}
    return {key: raw if key in text_fields else _parse_value(raw) for key, (raw, _) in entries.items()}


def _tokenize(text: str) -> Tuple[Dict[str, Dict[str, Tuple[str, int]]], Dict[str, int], List[Tuple[int, str]]]:
    sections: Dict[str, Dict[str, Tuple[str, int]]] = {}
    headers: Dict[str, int] = {}
    errors: List[Tuple[int, str]] = []
    current: Optional[str] = None
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                errors.append((number, f"malformed section header {line!r}"))
                current = None
                continue
            name = line[1:-1].strip()
            if name not in SECTIONS:
                errors.append((number, f"unknown section [{name}]"))
                current = None
                continue
            if name in headers:
                errors.append((number, f"duplicate section [{name}]"))
            headers.setdefault(name, number)
            sections.setdefault(name, {})
            current = name
            continue
        if "=" not in line:
            errors.append((number, f"expected key = value, got {line!r}"))
            continue
        if current is None:
            errors.append((number, "key outside of a known section"))
            continue
        key, raw = (part.strip() for part in line.split("=", 1))
        if key in sections[current]:
            errors.append((number, f"duplicate key {key!r} in [{current}]"))
            continue
        sections[current][key] = (raw, number)
    return sections, headers, errors


def _validation_errors(e: ValidationError, entries: Dict[str, Tuple[str, int]],
                       header_line: int) -> List[Tuple[int, str]]:
    out = []
    for err in e.errors():
        loc = err.get("loc") or ()
        key = str(loc[0]) if loc else ""
        line = entries[key][1] if key in entries else header_line
        message = err.get("msg", "invalid value")
        if err.get("type") == "extra_forbidden":
            message = "unknown key"
        out.append((line, f"{key}: {message}" if key else message))
    return out


def parse_config(text: str) -> Config:
    """Parse and validate a configuration document

    Raises ConfigError carrying every (line, message) found.
    """
    sections, headers, errors = _tokenize(text)
    validated: Dict[str, BaseModel] = {}
    for name, model in SECTION_MODELS.items():
        entries = sections.get(name, {})
        try:
            validated[name] = model(**_section_values(model, entries))
        except ValidationError as e:
            errors.extend(_validation_errors(e, entries, headers.get(name, 0)))

    grid = None
    if "grid" in validated:
        try:
            grid = validated["grid"].to_grid()
        except ValidationError as e:
            errors.extend((headers.get("grid", 0), err.get("msg", "invalid grid")) for err in e.errors())
    if errors:
        raise ConfigError(sorted(errors))
    return Config(
        grid=grid,
        params=validated["params"].to_params(),
        initial_data=validated["initial_data"],
        output=validated["output"],
        checks=validated["checks"],
    )


def _serialize_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        items = [_serialize_value(v) for v in value]
        return ", ".join(items) + ("," if len(items) == 1 else "")
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def serialize_config(config: Config) -> str:
    """Render a Config as text that parses back to an equal Config"""
    blocks = {
        "grid": {"n": config.grid.n, "dims": list(config.grid.dims),
                 "box_lengths": list(config.grid.box_lengths)},
        "params": config.params.model_dump(),
        "initial_data": config.initial_data.model_dump(),
        "output": config.output.model_dump(),
        "checks": config.checks.model_dump(),
    }
    lines: List[str] = []
    for name in SECTIONS:
        lines.append(f"[{name}]")
        for key, value in blocks[name].items():
            if value is None:
                continue
            lines.append(f"{key} = {_serialize_value(value)}")
        lines.append("")
    return "\n".join(lines)


class SimConfig:
    """Loads a run configuration file, falling back to the built-in default"""

    def __init__(self, config_path: Union[str, Path] = "config/default.cfg"):
        self.config_path = Path(config_path)
        self.config = self._load_config()

    def _load_config(self) -> Config:
        """Load configuration from file"""
        if not self.config_path.exists():
            return self._get_default_config()
        return parse_config(self.config_path.read_text(encoding="utf-8"))

    def _get_default_config(self) -> Config:
        return parse_config(DEFAULT_CONFIG_TEXT)

    def get_grid(self) -> SpectralGrid:
        return self.config.grid

    def get_params(self) -> SimParams:
        return self.config.params

    def get_output_config(self) -> OutputSection:
        return self.config.output

    def get_checks(self) -> ChecksSection:
        return self.config.checks
