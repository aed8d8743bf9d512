from pydantic import BaseModel, ConfigDict, Field, model_validator


class ConfusionCounts(BaseModel):
    model_config = ConfigDict(frozen=True)

    tp: int = Field(ge=0)
    fp: int = Field(ge=0)
    tn: int = Field(ge=0)
    fn: int = Field(ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


class ClassificationMetrics(BaseModel):
    """Test-set metrics recorded after every round."""

    model_config = ConfigDict(frozen=True)

    accuracy: float = Field(ge=0.0, le=1.0)
    precision: float = Field(ge=0.0, le=1.0)
    recall: float = Field(ge=0.0, le=1.0)
    f1: float = Field(ge=0.0, le=1.0)
    roc_auc: float = Field(ge=0.0, le=1.0)


class TTestResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: float
    p_value: float = Field(ge=0.0, le=1.0)
    dof: int = Field(ge=1)
    degenerate: bool = False


class Summary(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean: float
    std: float = Field(ge=0.0)
    stderr: float = Field(ge=0.0)
    n: int = Field(ge=1)

    @model_validator(mode="after")
    def single_value_has_no_spread(self) -> "Summary":
        if self.n == 1 and (self.std != 0.0 or self.stderr != 0.0):
            raise ValueError("a single value has zero std and stderr")
        return self
