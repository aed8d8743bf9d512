from collections.abc import Sequence
from dataclasses import replace

import numpy as np
import structlog

from ..models.data_models import (
    DataConfig,
    FeatureMatrix,
    NormalizationStats,
    PartitionPlan,
    PreparedData,
    RawTable,
    SyntheticSpec,
)
from ..models.exceptions import (
    CoercionError,
    ConfigError,
    DataLoadError,
    FeatureSelectionError,
    ImputationError,
    NormalizationError,
    PartitionError,
)
from ..repositories.dataset_repository import HEX_PATTERN, load_csv

logger = structlog.stdlib.get_logger()

SeedLike = int | Sequence[int]


def coerce_numeric(
    table: RawTable, codes: dict[str, dict[str, int]] | None = None
) -> FeatureMatrix:
    """
    Converts raw cells to a numeric matrix. Hex text is parsed base-16,
    other text gets a dense code per column in first-appearance order,
    missing cells become NaN.

    `codes` is a code book from a previous table (normally the training
    table); unseen categories extend it, so train and test share codes.
    """
    features = table.feature_columns
    book = {col: dict(mapping) for col, mapping in (codes or {}).items()}
    label_idx = table.label_index
    feature_idx = [i for i in range(len(table.columns)) if i != label_idx]

    X = np.empty((len(table.rows), len(features)), dtype=float)
    y = np.empty(len(table.rows), dtype=np.int8)

    for r, row in enumerate(table.rows):
        label = row[label_idx]
        if label is None:
            raise CoercionError(f"row {r} has a missing label")
        label = label if isinstance(label, str) else _number_text(label)
        if label in table.positive_labels:
            y[r] = 1
        elif table.negative_labels is None or label in table.negative_labels:
            y[r] = 0
        else:
            raise CoercionError(f"label value '{label}' is outside the declared sets")

        for c, i in enumerate(feature_idx):
            cell = row[i]
            if cell is None:
                X[r, c] = np.nan
            elif isinstance(cell, (int, float)):
                X[r, c] = cell
            elif HEX_PATTERN.match(cell):
                X[r, c] = float(int(cell, 16))
            else:
                mapping = book.setdefault(features[c], {})
                X[r, c] = mapping.setdefault(cell, len(mapping))

    return FeatureMatrix(X=X, y=y, feature_names=list(features), categories=book)


def _number_text(value: float) -> str:
    # "1.0" in a label column should still match a declared label "1"
    return str(int(value)) if value.is_integer() else repr(value)


def feature_medians(matrix: FeatureMatrix) -> np.ndarray:
    """Per-feature medians over the observed (non-missing) entries."""
    observed = ~np.isnan(matrix.X)
    empty = [matrix.feature_names[j] for j in np.flatnonzero(~observed.any(axis=0))]
    if empty:
        raise ImputationError(f"features with no observed values: {', '.join(empty)}")
    return np.nanmedian(matrix.X, axis=0)


def impute_median(
    matrix: FeatureMatrix, medians: np.ndarray | None = None
) -> FeatureMatrix:
    if not matrix.has_missing:
        return matrix
    if medians is None:
        medians = feature_medians(matrix)
    if medians.shape != (matrix.n_features,):
        raise ImputationError(
            f"expected {matrix.n_features} medians, got {medians.shape[0]}"
        )
    X = np.where(np.isnan(matrix.X), medians[np.newaxis, :], matrix.X)
    if np.isnan(X).any():
        raise ImputationError("supplied medians contain NaN")
    return replace(matrix, X=X)


def drop_constant_features(matrix: FeatureMatrix) -> tuple[FeatureMatrix, list[int]]:
    """Removes zero-variance columns. Returns the reduced matrix and the kept column indices."""
    X = matrix.X
    varying = X.max(axis=0) != X.min(axis=0)
    kept = [int(j) for j in np.flatnonzero(varying)]
    if not kept:
        raise FeatureSelectionError("every feature is constant; nothing left to train on")
    if len(kept) < matrix.n_features:
        logger.info(
            "data.constant_features_dropped",
            dropped=[matrix.feature_names[j] for j in np.flatnonzero(~varying)],
        )
    return select_features(matrix, kept), kept


def select_features(matrix: FeatureMatrix, kept: list[int]) -> FeatureMatrix:
    if len(kept) == matrix.n_features:
        return matrix
    return replace(
        matrix,
        X=matrix.X[:, kept],
        feature_names=[matrix.feature_names[j] for j in kept],
    )


def fit_normalizer(train: FeatureMatrix) -> NormalizationStats:
    mu = train.X.mean(axis=0)
    # population convention (ddof=0)
    sigma = train.X.std(axis=0)
    zero = [train.feature_names[j] for j in np.flatnonzero(sigma == 0)]
    if zero:
        raise NormalizationError(
            f"zero standard deviation in {', '.join(zero)}; "
            "run drop_constant_features first"
        )
    return NormalizationStats(mu=mu, sigma=sigma)


def apply_normalizer(matrix: FeatureMatrix, stats: NormalizationStats) -> FeatureMatrix:
    if stats.mu.shape != (matrix.n_features,):
        raise NormalizationError(
            f"stats fitted on {stats.mu.shape[0]} features, matrix has {matrix.n_features}"
        )
    if (stats.sigma == 0).any():
        raise NormalizationError("zero sigma; run drop_constant_features first")
    return replace(matrix, X=(matrix.X - stats.mu) / stats.sigma)


def partition_uniform(n: int, n_clients: int, seed: SeedLike) -> PartitionPlan:
    """Seeded shuffle split into near-equal parts (sizes differ by at most one)."""
    _check_partition_sizes(n, n_clients)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    return PartitionPlan(
        assignments=[np.sort(part) for part in np.array_split(order, n_clients)]
    )


def partition_dirichlet(
    y: np.ndarray, n_clients: int, alpha: float, seed: SeedLike
) -> PartitionPlan:
    """
    Label-skewed split: each class is shuffled and cut among the clients by
    a Dirichlet(alpha) proportion vector. Empty clients are repaired by
    moving one index over from the currently largest client.
    """
    n = len(y)
    _check_partition_sizes(n, n_clients)
    if alpha <= 0:
        raise PartitionError(f"alpha must be positive, got {alpha}")
    if n_clients == 1:
        return PartitionPlan(assignments=[np.arange(n)])

    rng = np.random.default_rng(seed)
    buckets: list[list[np.ndarray]] = [[] for _ in range(n_clients)]
    for label in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == label))
        proportions = rng.dirichlet(np.full(n_clients, alpha))
        cuts = (np.cumsum(proportions) * len(idx)).astype(int)[:-1]
        for client, part in enumerate(np.split(idx, cuts)):
            buckets[client].append(part)

    assignments = [np.concatenate(parts) for parts in buckets]
    repaired = 0
    while (sizes := np.array([len(a) for a in assignments])).min() == 0:
        empty = int(np.argmin(sizes))
        donor = int(np.argmax(sizes))
        assignments[empty] = assignments[donor][-1:]
        assignments[donor] = assignments[donor][:-1]
        repaired += 1
    if repaired:
        logger.warning("partition.empty_client_repaired", clients=repaired, alpha=alpha)

    return PartitionPlan(assignments=[np.sort(a) for a in assignments])


def _check_partition_sizes(n: int, n_clients: int):
    if n_clients < 1:
        raise PartitionError(f"need at least one client, got {n_clients}")
    if n < n_clients:
        raise PartitionError(f"cannot split {n} samples across {n_clients} clients")


def generate_synthetic(
    spec: SyntheticSpec, seed: SeedLike
) -> tuple[FeatureMatrix, FeatureMatrix]:
    """
    Two isotropic Gaussian clouds with means +/- (separation / 2) * u where
    u = (1, ..., 1) / sqrt(d). Exactly round(positive_fraction * n) samples of
    each split are positive.
    """
    rng = np.random.default_rng(seed)
    d = spec.n_features
    direction = np.ones(d) / np.sqrt(d)
    names = [f"x{j}" for j in range(d)]

    def draw(n: int) -> FeatureMatrix:
        labels = np.zeros(n, dtype=np.int8)
        labels[: int(round(spec.positive_fraction * n))] = 1
        labels = rng.permutation(labels)
        signs = 2.0 * labels - 1.0
        centres = np.outer(signs * spec.separation / 2.0, direction)
        X = centres + rng.normal(0.0, spec.noise_scale, size=(n, d))
        return FeatureMatrix(X=X, y=labels, feature_names=names)

    return draw(spec.n_train), draw(spec.n_test)


def train_test_split(
    matrix: FeatureMatrix, test_fraction: float, seed: SeedLike
) -> tuple[FeatureMatrix, FeatureMatrix]:
    n = matrix.n_samples
    if n < 2:
        raise PartitionError("need at least two samples to hold out a test set")
    n_test = min(max(int(round(n * test_fraction)), 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    return matrix.subset(np.sort(order[n_test:])), matrix.subset(np.sort(order[:n_test]))


def _require_both_classes(test: FeatureMatrix, config: DataConfig):
    # ROC AUC on the held-out set needs at least one sample of each class
    if 0 < int(test.y.sum()) < test.n_samples:
        return
    present = int(test.y[0])
    message = f"the test set holds only class {present}; ROC AUC would be undefined"
    if config.source == "synthetic":
        raise ConfigError(
            message, keys=["data.synthetic.n_test", "data.synthetic.positive_fraction"]
        )
    assert config.csv is not None
    if config.csv.test_path is not None:
        raise DataLoadError(message, path=config.csv.test_path)
    raise ConfigError(message, keys=["data.csv.test_fraction"])


def prepare_dataset(config: DataConfig, seed: SeedLike) -> PreparedData:
    """Load or generate, impute, drop constant columns, then standardize on train statistics."""
    if config.source == "synthetic":
        train, test = generate_synthetic(config.synthetic, seed)
        kept = list(range(train.n_features))
    else:
        source = config.csv
        assert source is not None
        raw = load_csv(
            source.train_path,
            source.label_column,
            source.positive_labels,
            source.negative_labels,
        )
        train = coerce_numeric(raw)
        if source.test_path is not None:
            raw_test = load_csv(
                source.test_path,
                source.label_column,
                source.positive_labels,
                source.negative_labels,
            )
            test = coerce_numeric(raw_test, codes=train.categories)
            if test.feature_names != train.feature_names:
                raise DataLoadError(
                    "test file columns differ from the training file",
                    path=source.test_path,
                    line=1,
                )
        else:
            train, test = train_test_split(train, source.test_fraction, seed)

        medians = feature_medians(train) if train.has_missing else None
        train = impute_median(train, medians)
        if test.has_missing:
            test = impute_median(test, medians if medians is not None else feature_medians(train))

        kept = list(range(train.n_features))
        if source.drop_constant:
            train, kept = drop_constant_features(train)
            test = select_features(test, kept)

    _require_both_classes(test, config)
    stats = fit_normalizer(train)
    prepared = PreparedData(
        train=apply_normalizer(train, stats),
        test=apply_normalizer(test, stats),
        kept_features=kept,
        stats=stats,
    )
    logger.info(
        "dataset.prepared",
        source=config.source,
        n_train=prepared.train.n_samples,
        n_test=prepared.test.n_samples,
        n_features=prepared.train.n_features,
    )
    return prepared
