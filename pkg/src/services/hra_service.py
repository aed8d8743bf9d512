"""
Hybrid reputation aggregation: a geometric-median reference scores each
client's distance, a piecewise-linear trust weight turns the distance into
[0, 1], and a momentum reputation carries trust across rounds.
"""

from collections.abc import Mapping, Sequence

import numpy as np
import structlog

from ..models.aggregation_models import (
    HraConfig,
    HraDiagnostics,
    HraVariant,
    ReputationState,
    UpdateSet,
)
from ..models.exceptions import AggregatorConfigError, ReputationError
from ..models.learning_models import ModelParams
from .aggregation_service import geometric_median, simple_mean, stack, unflatten

logger = structlog.stdlib.get_logger()


def anomaly_scores(updates: UpdateSet, cfg: HraConfig) -> tuple[np.ndarray, np.ndarray]:
    """Distances to the geometric median of the weight vectors (bias included only on request)."""
    vectors = stack(updates) if cfg.anomaly_includes_bias else updates.weight_matrix()
    reference = geometric_median(vectors, cfg.geomed)
    return np.linalg.norm(vectors - reference, axis=1), reference


def _check_thresholds(t_low: float, t_high: float):
    if not t_low < t_high:
        raise AggregatorConfigError(f"t_low ({t_low}) must be less than t_high ({t_high})")


def trust_weight(delta: float, t_low: float, t_high: float) -> float:
    _check_thresholds(t_low, t_high)
    if delta <= t_low:
        return 1.0
    if delta >= t_high:
        return 0.0
    return (t_high - delta) / (t_high - t_low)


def trust_weights(deltas: np.ndarray, t_low: float, t_high: float) -> np.ndarray:
    """Vectorised `trust_weight`."""
    _check_thresholds(t_low, t_high)
    ramp = (t_high - deltas) / (t_high - t_low)
    return np.where(deltas <= t_low, 1.0, np.where(deltas >= t_high, 0.0, ramp))


def update_reputation(
    state: ReputationState, phi: Mapping[int, float], rho: float
) -> ReputationState:
    """r <- rho * r + (1 - rho) * phi for every client in `phi`. Returns a new state."""
    unknown = sorted(cid for cid in phi if cid not in state.reputations)
    if unknown:
        raise ReputationError(f"no reputation entry for clients {unknown}")
    updated = dict(state.reputations)
    for cid, weight in phi.items():
        if not 0.0 <= weight <= 1.0:
            raise ReputationError(f"trust weight of client {cid} outside [0, 1]: {weight}")
        updated[cid] = rho * state.reputations[cid] + (1.0 - rho) * weight
    return ReputationState(reputations=updated, rounds_observed=state.rounds_observed + 1)


def closed_form_reputation(r0: float, rho: float, history: Sequence[float]) -> float:
    t = len(history)
    carried = sum(rho ** (t - 1 - i) * phi for i, phi in enumerate(history))
    return rho**t * r0 + (1.0 - rho) * carried


def aggregate_hra(
    updates: UpdateSet, state: ReputationState, cfg: HraConfig
) -> tuple[ModelParams, ReputationState, HraDiagnostics]:
    """
    One aggregation step. Weights use the reputations held *before* this
    round; the reputation update follows the aggregate.
    """
    ids = updates.client_ids
    state = state.with_clients(ids, cfg.initial_reputation)

    deltas, reference = anomaly_scores(updates, cfg)
    phi = trust_weights(deltas, cfg.t_low, cfg.t_high)
    reputations = state.vector(ids)

    match cfg.variant:
        case HraVariant.FULL:
            combined = reputations * phi
        case HraVariant.ANOMALY_ONLY:
            combined = phi.copy()
        case HraVariant.REPUTATION_ONLY:
            combined = reputations.copy()

    fallback = not combined.any()
    if fallback:
        if cfg.anomaly_includes_bias:
            params = unflatten(reference)
        else:
            # the 1-D geometric median of the biases is their median
            params = ModelParams(
                w=reference.copy(), b=float(np.median(updates.bias_vector()))
            )
        logger.warning(
            "hra.fallback",
            clients=len(ids),
            min_anomaly_distance=float(deltas.min()),
            t_high=cfg.t_high,
        )
    elif np.all(combined == combined[0]):
        # equal weights cancel; reuse the plain mean so the result is bit-identical
        params = simple_mean(updates).params
    else:
        normalised = combined / combined.sum()
        params = unflatten(normalised @ stack(updates))

    if cfg.variant is HraVariant.ANOMALY_ONLY:
        next_state = state
    else:
        next_state = update_reputation(state, dict(zip(ids, phi.tolist())), cfg.rho)

    diagnostics = HraDiagnostics(
        anomaly_distances=deltas,
        trust_weights=phi,
        combined_weights=combined,
        reference=reference,
        fallback_used=fallback,
    )
    return params, next_state, diagnostics


def effective_weights(diagnostics: HraDiagnostics) -> np.ndarray:
    """Normalised per-client share of the aggregate; zero everywhere on fallback."""
    combined = diagnostics.combined_weights
    total = combined.sum()
    if total == 0:
        return np.zeros_like(combined)
    if np.all(combined == combined[0]):
        return np.full(combined.shape, 1.0 / combined.size)
    return combined / total
