from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .exceptions import FieldConflict
from .learning_models import ModelParams


@dataclass(frozen=True)
class UpdateSet:
    """One round's client submissions, in client-id order as received."""

    client_ids: list[int]
    params: list[ModelParams]

    def __post_init__(self):
        if not self.params:
            raise ValueError("an update set needs at least one client")
        if len(self.client_ids) != len(self.params):
            raise ValueError("client_ids and params must have equal length")
        if len(set(self.client_ids)) != len(self.client_ids):
            raise ValueError("client ids must be unique")
        d = self.params[0].dim
        if any(p.dim != d for p in self.params):
            raise ValueError("all client params must share one dimension")

    @property
    def size(self) -> int:
        return len(self.params)

    @property
    def dim(self) -> int:
        return self.params[0].dim

    def weight_matrix(self) -> np.ndarray:
        """(M, d) stack of weight vectors, bias excluded."""
        return np.stack([p.w for p in self.params])

    def bias_vector(self) -> np.ndarray:
        return np.array([p.b for p in self.params], dtype=float)


@dataclass(frozen=True)
class AggregationResult:
    params: ModelParams
    # Per-client share of the aggregate; 0/1 indicators normalised for selection rules.
    weights: np.ndarray
    diagnostics: dict[str, Any] = field(default_factory=dict)


class GeoMedConfig(BaseModel):
    """Smoothed Weiszfeld solver settings."""

    model_config = ConfigDict(extra="forbid")

    tolerance: float = Field(default=1e-10, gt=0.0)
    max_iterations: int = Field(default=1000, ge=1)
    epsilon: float = Field(default=1e-12, gt=0.0)


class HraVariant(StrEnum):
    FULL = "full"
    ANOMALY_ONLY = "anomaly_only"
    REPUTATION_ONLY = "reputation_only"


class HraConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    t_low: float = Field(default=3.0, gt=0.0)
    t_high: float = Field(default=7.0, gt=0.0)
    rho: float = Field(default=0.5, ge=0.0, le=1.0)
    variant: HraVariant = HraVariant.FULL
    initial_reputation: float = Field(default=1.0, ge=0.0, le=1.0)
    anomaly_includes_bias: bool = False
    geomed: GeoMedConfig = Field(default_factory=GeoMedConfig)

    @model_validator(mode="after")
    def thresholds_ordered(self) -> "HraConfig":
        if self.t_low >= self.t_high:
            raise FieldConflict(
                f"t_low ({self.t_low}) must be less than t_high ({self.t_high})",
                fields=("t_low", "t_high"),
            )
        return self


@dataclass(frozen=True)
class ReputationState:
    """Per-client trust carried across rounds. Treated as a value: updates return a new state."""

    reputations: dict[int, float]
    rounds_observed: int = 0

    def __post_init__(self):
        for cid, r in self.reputations.items():
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"reputation of client {cid} outside [0, 1]: {r}")

    @classmethod
    def initial(cls, client_ids: list[int], value: float = 1.0) -> "ReputationState":
        return cls(reputations={cid: value for cid in client_ids})

    def with_clients(self, client_ids: list[int], value: float) -> "ReputationState":
        """Inserts unseen clients at `value`; known clients keep their score."""
        missing = [cid for cid in client_ids if cid not in self.reputations]
        if not missing:
            return self
        merged = dict(self.reputations)
        merged.update({cid: value for cid in missing})
        return ReputationState(reputations=merged, rounds_observed=self.rounds_observed)

    def vector(self, client_ids: list[int]) -> np.ndarray:
        return np.array([self.reputations[cid] for cid in client_ids], dtype=float)

    @property
    def mean(self) -> float:
        return float(np.mean(list(self.reputations.values())))


@dataclass(frozen=True)
class HraDiagnostics:
    anomaly_distances: np.ndarray
    trust_weights: np.ndarray
    combined_weights: np.ndarray
    reference: np.ndarray
    fallback_used: bool


class RuleConfig(BaseModel):
    """Settings consumed by the memoryless rules. Unset values mean 'use the default'."""

    model_config = ConfigDict(extra="forbid")

    f: int | None = Field(default=None, ge=0)
    trim: int | None = Field(default=None, ge=0)
    multi_krum_m: int | None = Field(default=None, ge=1)
    geomed: GeoMedConfig = Field(default_factory=GeoMedConfig)
