from dataclasses import dataclass, field

from pydantic import BaseModel, ConfigDict, Field

from .attack_models import AttackKind
from .learning_models import ModelParams
from .stats_models import ClassificationMetrics, Summary, TTestResult


class ClientDiagnostic(BaseModel):
    """One client's treatment by the aggregator in one round."""

    model_config = ConfigDict(frozen=True)

    client_id: int
    attack: AttackKind
    effective_weight: float = Field(ge=0.0)
    anomaly_distance: float | None = Field(default=None, ge=0.0)
    trust_weight: float | None = Field(default=None, ge=0.0, le=1.0)
    # Reputation the round was aggregated with, and the value after its update.
    prior_reputation: float | None = Field(default=None, ge=0.0, le=1.0)
    reputation: float | None = Field(default=None, ge=0.0, le=1.0)


class RoundRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    round: int = Field(ge=0)
    metrics: ClassificationMetrics
    lr: float = Field(gt=0.0)
    # HRA-only fields stay None for the memoryless rules.
    mean_anomaly_distance: float | None = Field(default=None, ge=0.0)
    reputations: dict[int, float] | None = None
    fallback_used: bool | None = None
    clients: list[ClientDiagnostic] = Field(default_factory=list)
    fingerprint: str = ""

    @property
    def mean_reputation(self) -> float | None:
        if self.reputations is None:
            return None
        return sum(self.reputations.values()) / len(self.reputations)


@dataclass(frozen=True)
class RunResult:
    run_index: int
    seed: int
    records: list[RoundRecord]
    final_params: ModelParams
    # global model after each round; the last entry is final_params
    trajectory: list[ModelParams] = field(default_factory=list)

    def __post_init__(self):
        if [r.round for r in self.records] != list(range(len(self.records))):
            raise ValueError("round records must be numbered 0..R-1")

    @property
    def final_accuracy(self) -> float:
        return self.records[-1].metrics.accuracy


class RoundSummary(BaseModel):
    """Across-run statistics for one round (plot-ready)."""

    round: int
    accuracy: Summary
    mean_anomaly_distance: Summary | None = None
    mean_reputation: Summary | None = None


@dataclass(frozen=True)
class ExperimentResult:
    label: str
    rule: str
    runs: list[RunResult]
    curves: list[RoundSummary]
    final_accuracies: list[float]
    final: Summary


class ThresholdSweepRow(BaseModel):
    t_low: float
    t_high: float
    final_acc_mean: float
    final_acc_std: float
    change_pp: float


class LearningRateSweepRow(BaseModel):
    eta0: float
    final_acc_mean: float
    final_acc_std: float
    change_pp: float


class AblationRow(BaseModel):
    variant: str
    final_acc_mean: float
    final_acc_std: float
    drop_pp: float


class ComparisonRow(BaseModel):
    rule: str
    final: Summary
    ttest: TTestResult | None = None


StudyRow = ThresholdSweepRow | LearningRateSweepRow | AblationRow | ComparisonRow


@dataclass(frozen=True)
class StudyResult:
    """Experiments of a sweep, ablation or comparison plus the study's table."""

    kind: str
    experiments: list[ExperimentResult]
    rows: list[StudyRow]
