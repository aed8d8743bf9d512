from typing import Any

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from .aggregation_models import GeoMedConfig, HraConfig, RuleConfig
from .attack_models import AttackConfig
from .data_models import DataConfig, PartitionConfig
from .exceptions import FieldConflict
from .learning_models import TrainConfig

AGGREGATION_RULES: tuple[str, ...] = (
    "simple_mean",
    "coordinate_median",
    "trimmed_mean",
    "krum",
    "multi_krum",
    "bulyan",
    "geometric_median",
    "hra",
)

# Threshold grid explored by the sensitivity study; the first pair is the baseline.
DEFAULT_THRESHOLD_PAIRS: list[tuple[float, float]] = [
    (3.0, 7.0),
    (2.0, 6.0),
    (2.0, 7.0),
    (3.0, 6.0),
    (5.0, 6.0),
    (5.0, 7.0),
    (2.0, 10.0),
    (3.0, 10.0),
    (3.0, 20.0),
    (2.0, 20.0),
    (5.0, 10.0),
    (5.0, 20.0),
    (10.0, 20.0),
]

DEFAULT_LEARNING_RATES: list[float] = [0.1, 0.01, 0.05, 0.2]


def format_pydantic_errors(e: ValidationError) -> tuple[str, dict[str, str]]:
    """
    Flattens a validation error into dotted keys ('hra.t_low') with the
    pydantic prefixes stripped. A cross-field conflict is reported under
    each field it names.
    Returns (one-line summary, {dotted key: message}).
    """
    field_errors: dict[str, str] = {}
    for err in e.errors():
        loc = [str(part) for part in err["loc"]]
        msg = err["msg"].replace("Value error, ", "")
        if err["type"] == "extra_forbidden":
            msg = "unknown key"
        cause = err.get("ctx", {}).get("error")
        if isinstance(cause, FieldConflict):
            keys = [".".join([*loc, name]) for name in cause.fields]
        else:
            keys = [".".join(loc) or "<root>"]
        for key in keys:
            field_errors.setdefault(key, msg)

    summary = "; ".join(f"{key}: {msg}" for key, msg in field_errors.items())
    return summary, field_errors


def _check_rule(name: str) -> str:
    if name not in AGGREGATION_RULES:
        raise ValueError(
            f"unknown rule '{name}'; available: {', '.join(AGGREGATION_RULES)}"
        )
    return name


class AggregatorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rule: str = "hra"
    f: int | None = Field(default=None, ge=0)
    trim: int | None = Field(default=None, ge=0)
    multi_krum_m: int | None = Field(default=None, ge=1)

    @field_validator("rule")
    @classmethod
    def rule_registered(cls, v: str) -> str:
        return _check_rule(v)

    def rule_config(self, geomed: GeoMedConfig) -> RuleConfig:
        return RuleConfig(
            f=self.f, trim=self.trim, multi_krum_m=self.multi_krum_m, geomed=geomed
        )


class CompareConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rules: list[str] = Field(
        default_factory=lambda: [
            "hra",
            "simple_mean",
            "coordinate_median",
            "trimmed_mean",
            "krum",
            "multi_krum",
            "bulyan",
            "geometric_median",
        ]
    )

    @field_validator("rules")
    @classmethod
    def rules_registered(cls, v: list[str]) -> list[str]:
        for name in v:
            _check_rule(name)
        return v


class SweepConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    threshold_pairs: list[tuple[float, float]] = Field(
        default_factory=lambda: list(DEFAULT_THRESHOLD_PAIRS), min_length=1
    )
    learning_rates: list[float] = Field(
        default_factory=lambda: list(DEFAULT_LEARNING_RATES), min_length=1
    )

    @field_validator("threshold_pairs")
    @classmethod
    def pairs_ordered(cls, v: list[tuple[float, float]]) -> list[tuple[float, float]]:
        for t_low, t_high in v:
            if not 0 < t_low < t_high:
                raise ValueError(f"pair ({t_low}, {t_high}) needs 0 < t_low < t_high")
        return v

    @field_validator("learning_rates")
    @classmethod
    def rates_positive(cls, v: list[float]) -> list[float]:
        if any(rate <= 0 for rate in v):
            raise ValueError("learning rates must be positive")
        return v


class ScenarioConfig(BaseModel):
    """A complete, self-describing experiment. Unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    name: str | None = None
    seed: int = Field(default=0, ge=0, lt=2**64)
    runs: int = Field(default=5, ge=1)
    rounds: int = Field(default=20, ge=1)
    clients: int = Field(default=10, ge=1)

    data: DataConfig = Field(default_factory=DataConfig)
    partition: PartitionConfig = Field(default_factory=PartitionConfig)
    training: TrainConfig = Field(default_factory=TrainConfig)
    attacks: AttackConfig = Field(default_factory=AttackConfig)
    aggregator: AggregatorConfig = Field(default_factory=AggregatorConfig)
    hra: HraConfig = Field(default_factory=HraConfig)
    geomed: GeoMedConfig = Field(default_factory=GeoMedConfig)
    compare: CompareConfig = Field(default_factory=CompareConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)

    @model_validator(mode="after")
    def geomed_set_once(self) -> "ScenarioConfig":
        if "geomed" in self.hra.model_fields_set and self.hra.geomed != self.geomed:
            raise ValueError("set solver options under [geomed], not [hra.geomed]")
        return self

    def to_document(self) -> dict[str, Any]:
        """JSON-ready tree with every default spelled out; validates back to an equal config."""
        return self.model_dump(mode="json", exclude={"hra": {"geomed"}})

    def hra_config(self) -> HraConfig:
        """HRA settings with the scenario-wide geometric-median solver options."""
        return self.hra.model_copy(update={"geomed": self.geomed})

    def rule_config(self) -> RuleConfig:
        return self.aggregator.rule_config(self.geomed)

    def with_rule(self, rule: str) -> "ScenarioConfig":
        return self.model_copy(
            update={"aggregator": self.aggregator.model_copy(update={"rule": rule})}
        )
