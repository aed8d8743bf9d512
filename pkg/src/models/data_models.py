from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .exceptions import FieldConflict

# A raw cell: parsed numbers stay floats, everything else is kept as text,
# and None marks a missing value.
Cell = float | str | None


@dataclass(frozen=True)
class RawTable:
    """Rows exactly as read from a CSV file, before any coercion."""

    columns: list[str]
    rows: list[list[Cell]]
    label_column: str
    positive_labels: frozenset[str] = frozenset({"1"})
    # When set, labels outside positive | negative are rejected at coercion.
    negative_labels: frozenset[str] | None = None

    def __post_init__(self):
        if self.label_column not in self.columns:
            raise ValueError(f"label column '{self.label_column}' not in columns")
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(f"row {i} has {len(row)} cells, expected {width}")

    @property
    def label_index(self) -> int:
        return self.columns.index(self.label_column)

    @property
    def feature_columns(self) -> list[str]:
        return [c for c in self.columns if c != self.label_column]


@dataclass(frozen=True)
class FeatureMatrix:
    """
    Numeric features and binary labels.
    NaN entries in X mark values awaiting imputation; everything downstream of
    `impute_median` is finite.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    # column name -> category text -> integer code
    categories: dict[str, dict[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        if self.X.ndim != 2:
            raise ValueError("X must be a 2-D matrix")
        n, d = self.X.shape
        if n < 1 or d < 1:
            raise ValueError(f"feature matrix must be at least 1x1, got {n}x{d}")
        if self.y.shape != (n,):
            raise ValueError(f"y has shape {self.y.shape}, expected ({n},)")
        if len(self.feature_names) != d:
            raise ValueError("feature_names length must equal the column count")
        if not np.isin(self.y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if np.isinf(self.X).any():
            raise ValueError("X contains infinite values")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def has_missing(self) -> bool:
        return bool(np.isnan(self.X).any())

    def subset(self, indices: np.ndarray) -> "FeatureMatrix":
        """Rows selected by index, sharing names and code book."""
        return FeatureMatrix(
            X=self.X[indices],
            y=self.y[indices],
            feature_names=self.feature_names,
            categories=self.categories,
        )


@dataclass(frozen=True)
class NormalizationStats:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape:
            raise ValueError("mu and sigma must have the same length")


@dataclass(frozen=True)
class PartitionPlan:
    """Disjoint per-client index lists covering [0, n)."""

    assignments: list[np.ndarray]

    @property
    def n_clients(self) -> int:
        return len(self.assignments)

    @property
    def sizes(self) -> list[int]:
        return [len(a) for a in self.assignments]


@dataclass(frozen=True)
class PreparedData:
    """Train/test pair after the full preprocessing chain."""

    train: FeatureMatrix
    test: FeatureMatrix
    kept_features: list[int]
    stats: NormalizationStats


class SyntheticSpec(BaseModel):
    """Two Gaussian class clouds, the desk-scale stand-in for real traffic data."""

    model_config = ConfigDict(extra="forbid")

    n_train: int = Field(default=20_000, ge=1)
    n_test: int = Field(default=5_000, ge=1)
    n_features: int = Field(default=10, ge=1)
    positive_fraction: float = Field(default=0.5, gt=0.0, lt=1.0)
    separation: float = Field(default=4.0, ge=0.0)
    noise_scale: float = Field(default=1.0, gt=0.0)


class CsvSource(BaseModel):
    model_config = ConfigDict(extra="forbid")

    train_path: str
    test_path: str | None = None
    test_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    label_column: str = "label"
    positive_labels: list[str] = Field(default_factory=lambda: ["1"], min_length=1)
    negative_labels: list[str] | None = None
    drop_constant: bool = True


class DataConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    source: str = Field(default="synthetic", pattern="^(synthetic|csv)$")
    synthetic: SyntheticSpec = Field(default_factory=SyntheticSpec)
    csv: CsvSource | None = None

    @model_validator(mode="after")
    def csv_section_required(self) -> "DataConfig":
        if self.source == "csv" and self.csv is None:
            raise FieldConflict(
                "source 'csv' requires a [data.csv] section", fields=("source", "csv")
            )
        return self


class PartitionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: str = Field(default="dirichlet", pattern="^(uniform|dirichlet)$")
    alpha: float = Field(default=0.5, gt=0.0)
