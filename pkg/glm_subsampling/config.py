"""Experiment configuration files.

A config is an INI-style text file with up to four sections::

    [experiment]
    family = logistic
    repetitions = 200
    seed = 20240501

    [data]
    design = mzNormal
    n = 20000

    [sampling]
    r_p = 500
    r_grid = 400, 1000

    [output]
    directory = results/mznormal

Every key maps onto a field below; unknown keys and sections are rejected.
"""

import configparser
import re
from enum import Enum
from pathlib import Path
from typing import List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from glm_subsampling.errors import ParseError, ValidationError
from glm_subsampling.estimators import EstimatorKind, PilotMethod, PilotOptions
from glm_subsampling.glm_core import FamilyKind
from glm_subsampling.sampling import Criterion, CriterionKind
from glm_subsampling.simulation.designs import DesignKind, DesignSpec


class ExperimentMode(str, Enum):
    UNCONDITIONAL = "unconditional"
    CONDITIONAL = "conditional"


def _split_list(value):
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ExperimentSection(_Section):
    setting: Optional[str] = None
    family: Optional[FamilyKind] = None
    mode: Optional[ExperimentMode] = None
    repetitions: int = Field(default=1, ge=1)
    seed: int = 0
    threads: Optional[int] = Field(default=None, ge=1)
    record_timings: bool = False


class DataSection(_Section):
    design: Optional[DesignKind] = None
    n: Optional[int] = Field(default=None, ge=1)
    dim: Optional[int] = Field(default=None, ge=1)
    beta0: Optional[str] = None
    noise_sd: float = Field(default=3.0, gt=0)
    intercept: Optional[bool] = None
    csv_path: Optional[str] = None
    response_column: Optional[str] = None
    standardize: bool = True
    responses_on_demand: bool = False


class SamplingSection(_Section):
    r_p: int = Field(default=500, ge=1)
    r_grid: List[int] = Field(default_factory=lambda: [1000])
    criteria: List[CriterionKind] = Field(default_factory=lambda: [CriterionKind.A_OPT, CriterionKind.L_OPT])
    methods: List[EstimatorKind] = Field(
        default_factory=lambda: [EstimatorKind.UNWEIGHTED, EstimatorKind.WEIGHTED]
    )
    pilot_method: PilotMethod = PilotMethod.SRS
    p_m: Optional[float] = Field(default=None, gt=0, lt=1)
    pilot_attempts: int = Field(default=10, ge=1)
    draw_attempts: int = Field(default=10, ge=1)
    exclude_pilot: bool = False
    warm_start: bool = False
    sampler: str = "alias"
    trim_alpha: float = Field(default=0.0, ge=0, lt=0.5)
    compute_variance: bool = True

    @field_validator("r_grid", "methods", mode="before")
    @classmethod
    def _comma_list(cls, value):
        return _split_list(value)

    @field_validator("criteria", mode="before")
    @classmethod
    def _criteria(cls, value):
        return [Criterion.parse(token).kind if isinstance(token, str) else token for token in _split_list(value)]

    @field_validator("r_grid")
    @classmethod
    def _positive_sizes(cls, value):
        if not value or any(r < 1 for r in value):
            raise ValueError("r_grid needs at least one positive subsample size")
        return value

    @field_validator("sampler")
    @classmethod
    def _sampler(cls, value):
        if value not in ("alias", "inverse_cdf"):
            raise ValueError("sampler must be 'alias' or 'inverse_cdf'")
        return value


class OutputSection(_Section):
    directory: str = "results"
    report: Optional[str] = None
    manifest: Optional[str] = None
    probabilities: Optional[str] = None
    estimate: Optional[str] = None


def size_violations(sampling: SamplingSection, p: int, needs_pilot: bool) -> List[str]:
    """Every fit needs at least as many rows as coefficients."""
    violations = [
        f"sampling.r_grid: subsample size {r} is below the {p} coefficients" for r in sampling.r_grid if r < p
    ]
    if needs_pilot and sampling.r_p < p:
        violations.append(f"sampling.r_p: pilot size {sampling.r_p} is below the {p} coefficients")
    return violations


def cross_field_violations(experiment: ExperimentSection, data: DataSection, sampling: SamplingSection) -> List[str]:
    violations = []
    family = experiment.family or (DesignSpec(kind=data.design).family_kind if data.design else None)
    if (data.design is None) == (data.csv_path is None):
        violations.append("data: exactly one of 'design' and 'csv_path' must be given")
    if data.design is not None:
        if data.n is None:
            violations.append("data.n: required when a design is used")
        else:
            for r in sampling.r_grid:
                if r > data.n:
                    violations.append(f"sampling.r_grid: subsample size {r} exceeds n={data.n}")
            if sampling.r_p > data.n:
                violations.append(f"sampling.r_p: pilot size {sampling.r_p} exceeds n={data.n}")
        p = DesignSpec(kind=data.design, dim=data.dim).dim + (1 if data.intercept else 0)
        violations.extend(size_violations(sampling, p, family is not FamilyKind.LINEAR))
    if data.csv_path is not None:
        if data.response_column is None:
            violations.append("data.response_column: required when csv_path is given")
        if experiment.family is None:
            violations.append("experiment.family: required when csv_path is given")
        if experiment.mode is ExperimentMode.UNCONDITIONAL:
            violations.append("experiment.mode: CSV data cannot be regenerated, use conditional")
    if sampling.pilot_method is PilotMethod.CASE_CONTROL and family is not FamilyKind.LOGISTIC:
        violations.append("sampling.pilot_method: case_control needs the logistic family")
    if not sampling.criteria:
        violations.append("sampling.criteria: at least one criterion is required")
    if not sampling.methods:
        violations.append("sampling.methods: at least one method is required")
    return violations


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentSection = Field(default_factory=ExperimentSection)
    data: DataSection = Field(default_factory=DataSection)
    sampling: SamplingSection = Field(default_factory=SamplingSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _cross_fields(self):
        violations = cross_field_violations(self.experiment, self.data, self.sampling)
        if violations:
            raise ValueError("; ".join(violations))
        return self

    @property
    def family_kind(self) -> FamilyKind:
        if self.experiment.family is not None:
            return self.experiment.family
        return DesignSpec(kind=self.data.design).family_kind

    @property
    def design_spec(self) -> Optional[DesignSpec]:
        if self.data.design is None:
            return None
        return DesignSpec(kind=self.data.design, dim=self.data.dim)

    @property
    def uses_csv(self) -> bool:
        return self.data.csv_path is not None

    @property
    def mode(self) -> ExperimentMode:
        if self.experiment.mode is not None:
            return self.experiment.mode
        return ExperimentMode.CONDITIONAL if self.uses_csv else ExperimentMode.UNCONDITIONAL

    @property
    def add_intercept(self) -> bool:
        """Simulation designs fit without an intercept, real data with one, unless overridden."""
        if self.data.intercept is not None:
            return self.data.intercept
        return self.uses_csv

    @property
    def setting(self) -> str:
        if self.experiment.setting:
            return self.experiment.setting
        if self.data.design is not None:
            return self.data.design.value
        return Path(self.data.csv_path).stem

    @property
    def criteria(self) -> List[Criterion]:
        return [Criterion(kind=kind) for kind in self.sampling.criteria]

    def pilot_options(self) -> PilotOptions:
        return PilotOptions(
            method=self.sampling.pilot_method,
            p_m=self.sampling.p_m,
            attempts=self.sampling.pilot_attempts,
            draw_attempts=self.sampling.draw_attempts,
            exclude_from_draw=self.sampling.exclude_pilot,
            warm_start=self.sampling.warm_start,
        )

    def output_path(self, kind: str, suffix: str) -> Path:
        explicit = getattr(self.output, kind)
        if explicit:
            return Path(explicit)
        return Path(self.output.directory) / f"{self.setting}_{kind}{suffix}"


_SECTIONS = {
    "experiment": ExperimentSection,
    "data": DataSection,
    "sampling": SamplingSection,
    "output": OutputSection,
}


def _line_of(text: str, pattern: str) -> Optional[int]:
    regex = re.compile(pattern)
    for number, line in enumerate(text.splitlines(), start=1):
        if regex.search(line):
            return number
    return None


def _key_line(text: str, section: str, key: str) -> Optional[int]:
    current = None
    key_pattern = re.compile(rf"^\s*{re.escape(key)}\s*[=:]")
    for number, line in enumerate(text.splitlines(), start=1):
        header = re.match(r"^\s*\[([^\]]+)\]", line)
        if header:
            current = header.group(1).strip()
        elif current == section and key_pattern.search(line):
            return number
    return None


def _read_sections(text: str, source: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("expected a [section] header before the first key", line=exc.lineno) from exc
    except configparser.DuplicateOptionError as exc:
        raise ParseError(f"duplicate key in section [{exc.section}]", line=exc.lineno, key=exc.option) from exc
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section [{exc.section}]", line=exc.lineno) from exc
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ParseError("line is neither a section header nor 'key = value'", line=line) from exc
    return parser


def _format_error(section: str, error: dict) -> str:
    location = ".".join(str(part) for part in error["loc"])
    prefix = f"{section}.{location}" if location else section
    return f"{prefix}: {error['msg']}"


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = _read_sections(text, source)
    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ParseError(f"unknown section [{section}]", line=_line_of(text, rf"^\s*\[{re.escape(section)}\]"))
        for key in parser.options(section):
            if key not in _SECTIONS[section].model_fields:
                raise ParseError(
                    f"unknown key in section [{section}]", line=_key_line(text, section, key), key=key
                )
        values[section] = dict(parser.items(section))

    violations = []
    sections = {}
    for name, model in _SECTIONS.items():
        try:
            sections[name] = model.model_validate(values.get(name, {}))
        except PydanticValidationError as exc:
            violations.extend(_format_error(name, error) for error in exc.errors())
    if not violations:
        violations = cross_field_violations(sections["experiment"], sections["data"], sections["sampling"])
    if violations:
        raise ValidationError(violations)
    return ExperimentConfig(**sections)


def parse_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read, validate and default-fill an experiment config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read config file {path}: {exc.strerror}") from exc
    return parse_config_text(text, source=str(path))
