from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


@dataclass(frozen=True)
class ModelParams:
    """Logistic-regression weights and bias: the unit clients and server exchange."""

    w: np.ndarray
    b: float

    def __post_init__(self):
        if self.w.ndim != 1:
            raise ValueError("w must be a 1-D vector")
        if not np.isfinite(self.w).all() or not np.isfinite(self.b):
            raise ValueError("model parameters must be finite")

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    @classmethod
    def zeros(cls, d: int) -> "ModelParams":
        return cls(w=np.zeros(d), b=0.0)


class TrainConfig(BaseModel):
    """Local optimiser settings shared by every client."""

    model_config = ConfigDict(extra="forbid")

    eta0: float = Field(default=0.1, gt=0.0)
    gamma: float = Field(default=0.998, gt=0.0, le=1.0)
    epochs: int = Field(default=16, ge=1)
