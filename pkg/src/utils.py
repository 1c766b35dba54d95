import json
from enum import Enum
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, Field, field_validator
from pydantic.dataclasses import dataclass


class TasepError(Exception):
    """Base class for all errors raised by this package"""


class ConfigurationParseError(TasepError, ValueError):
    """Configuration text could not be parsed"""


class PreconditionError(TasepError, ValueError):
    """An operation was called outside of its domain"""


class EnumerationBoundError(TasepError):
    """An enumeration would exceed its configured bound"""


class TruncationOverflowError(TasepError):
    """A queue counter reached the truncation dimension"""

    def __init__(self, d: int, counters: tuple[int, ...]):
        super().__init__(f"Counter state {counters} reached truncation dimension d={d}")
        self.d = d
        self.counters = counters


class DivergentTraceError(TasepError):
    """The semi-infinite trace of a configuration does not converge"""


class ConsistencyError(TasepError, AssertionError):
    """An internal consistency check failed"""


@dataclass
class PathsConfig:
    report_file: Path


class Command(str, Enum):
    weight = "weight"
    prob = "prob"
    table = "table"
    verify = "verify"
    sample = "sample"
    oracle = "oracle"
    ancestors = "ancestors"
    ansatz = "ansatz"


class WeightMethod(str, Enum):
    trace = "trace"
    ancestors = "ancestors"
    multiline = "multiline"


class VerifyTarget(str, Enum):
    quadratic = "quadratic"
    hats = "hats"
    stationarity = "stationarity"


class OutputFormat(str, Enum):
    table = "table"
    json = "json"
    csv = "csv"


@dataclass
class SectorConfig:
    l: int  # noqa: E741
    p: list[int]

    @field_validator("l")
    @classmethod
    def validate_length(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"Ring length must be positive, got {v}")
        return v

    @field_validator("p")
    @classmethod
    def validate_populations(cls, v: list[int]) -> list[int]:
        if any(p < 0 for p in v):
            raise ValueError(f"Populations must be non-negative, got {v}")
        return v


@dataclass
class SampleConfig:
    n: int
    sigmas: float = 4.0

    @field_validator("n")
    @classmethod
    def validate_n(cls, v: int) -> int:
        assert v >= 1, "At least one sample is required"
        return v

    @field_validator("sigmas")
    @classmethod
    def validate_sigmas(cls, v: float) -> float:
        if v <= 0:
            raise ValueError(f"Invalid tolerance: {v}")
        return v


@dataclass
class VerifyConfig:
    what: VerifyTarget
    n: int
    d: int
    l: int  # noqa: E741

    @field_validator("d")
    @classmethod
    def validate_d(cls, v: int) -> int:
        if v < 3:
            raise ValueError(f"Truncation dimension for verification must be >= 3, got {v}")
        return v


@dataclass
class OutputConfig:
    format: OutputFormat = OutputFormat.table


@dataclass
class LimitsConfig:
    max_states: int = 200_000
    max_multiline: int = 1_000_000
    max_solve_states: int = 3_000
    max_doublings: int = 4


@dataclass
class RunConfig:
    """Configuration for a run of the command line front end"""

    paths: PathsConfig
    command: Command
    sector: SectorConfig
    method: WeightMethod
    sample: SampleConfig
    verify: VerifyConfig
    output: OutputConfig
    limits: LimitsConfig
    seed: int
    config: str | None = None
    n_species: int | None = None
    truncation: int | None = None
    workers: int = 1
    compare: bool = True

    @field_validator("truncation")
    @classmethod
    def validate_truncation(cls, v: int | None) -> int | None:
        if v is not None and v < 1:
            raise ValueError(f"Invalid truncation dimension: {v}")
        return v

    @field_validator("workers")
    @classmethod
    def validate_workers(cls, v: int) -> int:
        assert v > 0, "Workers must be greater than 0"
        return v

    @classmethod
    def from_yaml(cls, yaml_path: str | Path):
        with open(yaml_path, "r") as f:
            cfg = yaml.safe_load(f)

        return cls(**cfg)


class RunReport(BaseModel):
    """Pydantic model for the outcome of one command"""

    command: str
    arguments: dict[str, Any] = Field(default_factory=dict)
    seed: int | None = None
    timings: dict[str, float] = Field(default_factory=dict)
    results: Any = None
    passed: bool = True


class ComparisonRow(BaseModel):
    """Weights of one configuration computed by every available route"""

    configuration: str
    oracle_probability: str
    trace_weight: str
    ancestor_weight: str
    multiline_weight: str | None = None
    normalization: str
    agree: bool


class ComparisonReport(BaseModel):
    """Pydantic model for the cross-validation of a sector"""

    length: int
    populations: list[int]
    n_states: int
    methods: list[str]
    frozen: bool = False
    rows: list[ComparisonRow] = Field(default_factory=list)
    first_mismatch: str | None = None

    @property
    def agree(self) -> bool:
        return self.first_mismatch is None


class RelationCheck(BaseModel):
    """Result of checking one operator identity"""

    name: str
    holds: bool
    max_deviation: int = 0
    offending_entry: list[int] | None = Field(
        default=None, description="Row and column of the first differing entry"
    )


class RelationReport(BaseModel):
    """Pydantic model for a suite of operator identity checks"""

    suite: str
    d: int
    checks: list[RelationCheck] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.holds for check in self.checks)


class SampleRow(BaseModel):
    configuration: str
    count: int
    frequency: float
    exact: str
    z_score: float
    within_band: bool


def write_json(data: Any, file_path: str | Path):
    with open(file_path, "w") as f:
        json.dump(data, f, indent=2, ensure_ascii=False)
