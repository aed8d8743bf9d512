"""
Memoryless aggregation rules.

Every rule works on flattened (w, b) vectors, bias last, so bias poisoning
is visible to all of them in the same way.
"""

from collections.abc import Callable, Sequence

import numpy as np
import structlog

from ..models.aggregation_models import (
    AggregationResult,
    GeoMedConfig,
    RuleConfig,
    UpdateSet,
)
from ..models.exceptions import (
    AggregationError,
    AggregatorConfigError,
    ModelShapeError,
    UnknownRuleError,
)
from ..models.learning_models import ModelParams

logger = structlog.stdlib.get_logger()

# A vertex replaces the Weiszfeld iterate only when it is better by more than
# this relative margin; ties (e.g. two points and their midpoint) keep the iterate.
VERTEX_MARGIN = 1e-9


def flatten(params: ModelParams) -> np.ndarray:
    if params.dim == 0:
        raise ModelShapeError("cannot flatten a model with no weights")
    return np.concatenate([params.w, [params.b]])


def unflatten(vector: np.ndarray) -> ModelParams:
    if vector.ndim != 1 or vector.shape[0] < 2:
        raise ModelShapeError(f"need a 1-D vector of length >= 2, got {vector.shape}")
    return ModelParams(w=vector[:-1].copy(), b=float(vector[-1]))


def stack(updates: UpdateSet) -> np.ndarray:
    """(M, d + 1) matrix of flattened client vectors."""
    return np.stack([flatten(p) for p in updates.params])


def _one_hot(size: int, positions: Sequence[int]) -> np.ndarray:
    weights = np.zeros(size)
    weights[list(positions)] = 1.0 / len(positions)
    return weights


def simple_mean(updates: UpdateSet) -> AggregationResult:
    X = stack(updates)
    return AggregationResult(
        params=unflatten(X.mean(axis=0)),
        weights=np.full(updates.size, 1.0 / updates.size),
    )


def _sorted_median(sorted_columns: np.ndarray) -> np.ndarray:
    m = sorted_columns.shape[0]
    mid = m // 2
    if m % 2:
        return sorted_columns[mid]
    return (sorted_columns[mid - 1] + sorted_columns[mid]) / 2


def coordinate_median(updates: UpdateSet) -> AggregationResult:
    X = np.sort(stack(updates), axis=0)
    return AggregationResult(
        params=unflatten(_sorted_median(X)),
        weights=np.full(updates.size, 1.0 / updates.size),
    )


def trimmed_mean(updates: UpdateSet, k: int) -> AggregationResult:
    M = updates.size
    if k < 0 or 2 * k >= M:
        raise AggregationError(f"trimmed mean needs 0 <= 2k < M, got k={k}, M={M}")
    X = np.sort(stack(updates), axis=0)
    kept = X[k : M - k]
    return AggregationResult(
        params=unflatten(kept.sum(axis=0) / kept.shape[0]),
        weights=np.full(M, 1.0 / M),
        diagnostics={"trim": k},
    )


def _squared_distances(X: np.ndarray) -> np.ndarray:
    diff = X[:, np.newaxis, :] - X[np.newaxis, :, :]
    return (diff**2).sum(axis=-1)


def _krum_scores(X: np.ndarray, neighbours: int) -> np.ndarray:
    D = _squared_distances(X)
    m = X.shape[0]
    scores = np.empty(m)
    for j in range(m):
        others = np.sort(np.delete(D[j], j))
        scores[j] = others[:neighbours].sum()
    return scores


def _check_krum(m: int, f: int):
    if f < 0:
        raise AggregationError(f"f must be non-negative, got {f}")
    if m < f + 3:
        raise AggregationError(f"Krum needs M >= f + 3, got M={m}, f={f}")


def krum_scores(updates: UpdateSet, f: int) -> np.ndarray:
    """Sum of squared distances from each update to its M - f - 2 nearest others."""
    _check_krum(updates.size, f)
    return _krum_scores(stack(updates), updates.size - f - 2)


def _krum_winner(scores: np.ndarray, ids: Sequence[int]) -> int:
    """Position of the lowest score; ties go to the smallest client id."""
    tied = np.flatnonzero(scores == scores.min())
    return int(min(tied, key=lambda pos: ids[pos]))


def krum_select(updates: UpdateSet, f: int) -> AggregationResult:
    scores = krum_scores(updates, f)
    winner = _krum_winner(scores, updates.client_ids)
    return AggregationResult(
        params=updates.params[winner],
        weights=_one_hot(updates.size, [winner]),
        diagnostics={"selected": [updates.client_ids[winner]], "scores": scores.tolist()},
    )


def _iterated_krum(
    X: np.ndarray, ids: Sequence[int], f: int, count: int, neighbours: Callable[[int], int]
) -> list[int]:
    """Repeatedly moves the current Krum winner into the selection; returns positions."""
    remaining = list(range(X.shape[0]))
    selected: list[int] = []
    for _ in range(count):
        sub = X[remaining]
        scores = _krum_scores(sub, neighbours(len(remaining)))
        pos = _krum_winner(scores, [ids[i] for i in remaining])
        selected.append(remaining.pop(pos))
    return selected


def multi_krum(updates: UpdateSet, f: int, m: int) -> AggregationResult:
    M = updates.size
    _check_krum(M, f)
    if not 1 <= m <= M - f - 2:
        raise AggregationError(f"Multi-Krum needs 1 <= m <= M - f - 2, got m={m}")
    X = stack(updates)
    selected = _iterated_krum(X, updates.client_ids, f, m, lambda s: s - f - 2)
    return AggregationResult(
        params=unflatten(X[selected].mean(axis=0)),
        weights=_one_hot(M, selected),
        diagnostics={"selected": [updates.client_ids[i] for i in selected]},
    )


def bulyan(updates: UpdateSet, f: int) -> AggregationResult:
    """
    Selects theta = M - 2f candidates by iterated Krum, then per coordinate
    averages the beta = theta - 2f candidate values closest to their median.
    """
    M = updates.size
    if f < 0:
        raise AggregationError(f"f must be non-negative, got {f}")
    if M < 4 * f + 3:
        raise AggregationError(f"Bulyan needs M >= 4f + 3, got M={M}, f={f}")
    theta = M - 2 * f
    beta = theta - 2 * f

    X = stack(updates)
    # late in the selection fewer than f + 3 candidates remain, so the
    # neighbour count is clamped to what is available
    selected = _iterated_krum(
        X, updates.client_ids, f, theta, lambda s: min(max(s - f - 2, 1), s - 1)
    )
    candidates = X[selected]
    median = _sorted_median(np.sort(candidates, axis=0))
    order = np.argsort(np.abs(candidates - median), axis=0, kind="stable")
    closest = np.take_along_axis(candidates, order[:beta], axis=0)
    return AggregationResult(
        params=unflatten(closest.mean(axis=0)),
        weights=_one_hot(M, selected),
        diagnostics={
            "selected": [updates.client_ids[i] for i in selected],
            "theta": theta,
            "beta": beta,
        },
    )


def _objective(X: np.ndarray, z: np.ndarray) -> float:
    return float(np.linalg.norm(X - z, axis=1).sum())


def weiszfeld(X: np.ndarray, cfg: GeoMedConfig) -> tuple[np.ndarray, np.ndarray, int]:
    """
    Smoothed Weiszfeld iteration from the arithmetic mean.
    Returns the point, its final normalised weights and the iteration count.
    """
    z = X.mean(axis=0)
    weights = np.full(X.shape[0], 1.0 / X.shape[0])
    iterations = 0
    for iterations in range(1, cfg.max_iterations + 1):
        dist = np.maximum(np.linalg.norm(X - z, axis=1), cfg.epsilon)
        inv = 1.0 / dist
        weights = inv / inv.sum()
        z_next = weights @ X
        moved = float(np.linalg.norm(z_next - z))
        z = z_next
        if moved < cfg.tolerance:
            break

    # vertex safeguard: the optimum often sits on an input point, where the
    # smoothed iteration can only approach it
    vertex_objectives = np.array([_objective(X, x) for x in X])
    best = int(np.argmin(vertex_objectives))
    if vertex_objectives[best] < _objective(X, z) * (1.0 - VERTEX_MARGIN):
        z = X[best].copy()
        weights = _one_hot(X.shape[0], [best])
    return z, weights, iterations


def geometric_median(
    vectors: np.ndarray | Sequence[np.ndarray], cfg: GeoMedConfig | None = None
) -> np.ndarray:
    X = np.asarray(vectors, dtype=float)
    if X.ndim == 1:
        X = X[:, np.newaxis] if X.size else X.reshape(0, 1)
    if X.shape[0] == 0:
        raise AggregationError("geometric median of an empty set")
    z, _, iterations = weiszfeld(X, cfg or GeoMedConfig())
    logger.debug("geomed.solved", points=X.shape[0], iterations=iterations)
    return z


def geometric_median_rule(updates: UpdateSet, cfg: GeoMedConfig) -> AggregationResult:
    X = stack(updates)
    z, weights, iterations = weiszfeld(X, cfg)
    return AggregationResult(
        params=unflatten(z), weights=weights, diagnostics={"iterations": iterations}
    )


def _require(rule: str, name: str, value: int | None) -> int:
    if value is None:
        raise AggregatorConfigError(f"rule '{rule}' requires an explicit '{name}'")
    return value


def _multi_krum_dispatch(updates: UpdateSet, config: RuleConfig) -> AggregationResult:
    f = _require("multi_krum", "f", config.f)
    m = config.multi_krum_m if config.multi_krum_m is not None else updates.size - f - 2
    return multi_krum(updates, f, m)


MEMORYLESS_RULES: dict[str, Callable[[UpdateSet, RuleConfig], AggregationResult]] = {
    "simple_mean": lambda u, c: simple_mean(u),
    "coordinate_median": lambda u, c: coordinate_median(u),
    "trimmed_mean": lambda u, c: trimmed_mean(u, _require("trimmed_mean", "trim", c.trim)),
    "krum": lambda u, c: krum_select(u, _require("krum", "f", c.f)),
    "multi_krum": _multi_krum_dispatch,
    "bulyan": lambda u, c: bulyan(u, _require("bulyan", "f", c.f)),
    "geometric_median": lambda u, c: geometric_median_rule(u, c.geomed),
}


def aggregate(
    rule: str, updates: UpdateSet, config: RuleConfig | None = None
) -> AggregationResult:
    try:
        handler = MEMORYLESS_RULES[rule]
    except KeyError:
        raise UnknownRuleError(
            f"unknown aggregation rule '{rule}'; available: "
            + ", ".join(sorted(MEMORYLESS_RULES))
        ) from None
    return handler(updates, config or RuleConfig())
