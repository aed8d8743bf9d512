import numpy as np
import pytest
from conftest import updates_from
from hypothesis import given, settings
from hypothesis import strategies as st

from src.models.aggregation_models import HraConfig, HraVariant, ReputationState
from src.models.exceptions import ReputationError
from src.services.aggregation_service import flatten, simple_mean
from src.services.aggregator_registry import HraAggregator
from src.services.hra_service import (
    aggregate_hra,
    anomaly_scores,
    closed_form_reputation,
    effective_weights,
    trust_weight,
    trust_weights,
    update_reputation,
)


def one_d(*values: float):
    return updates_from([[v, 0.0] for v in values])


def fresh(n: int, value: float = 1.0) -> ReputationState:
    return ReputationState.initial(list(range(n)), value)


# --- anomaly scores ---


def test_anomaly_scores_identical_clients():
    deltas, _ = anomaly_scores(updates_from([[0.5, -1.0, 0.25]] * 4), HraConfig())
    assert deltas == pytest.approx([0.0] * 4, abs=1e-12)


def test_anomaly_scores_by_hand():
    deltas, reference = anomaly_scores(one_d(1.0, 1.2, 9.0), HraConfig())
    assert reference[0] == pytest.approx(1.2, abs=1e-9)
    assert deltas == pytest.approx([0.2, 0.0, 7.8], abs=1e-9)


def test_anomaly_scores_ignore_bias_unless_asked():
    u = updates_from([[1.0, 0.0], [1.0, 50.0], [1.0, -3.0]])
    deltas, _ = anomaly_scores(u, HraConfig())
    assert deltas == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)
    with_bias, reference = anomaly_scores(u, HraConfig(anomaly_includes_bias=True))
    assert reference.shape == (2,)
    assert with_bias[1] > with_bias[0]


def test_anomaly_scores_scale_with_clients():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(6, 4))
    base, _ = anomaly_scores(updates_from(X), HraConfig())
    scaled, _ = anomaly_scores(updates_from(3.0 * X), HraConfig())
    np.testing.assert_allclose(scaled, 3.0 * base, rtol=1e-6, atol=1e-9)


# --- trust weight ---


def test_trust_weight_branches():
    assert trust_weight(2.0, 3.0, 7.0) == 1.0
    assert trust_weight(3.0, 3.0, 7.0) == 1.0
    assert trust_weight(5.0, 3.0, 7.0) == 0.5
    assert trust_weight(7.0, 3.0, 7.0) == 0.0
    assert trust_weight(70.0, 3.0, 7.0) == 0.0


def test_trust_weights_match_piecewise_formula_on_grid():
    grid = np.linspace(0.0, 10.0, 10_000)
    expected = [
        1.0 if d <= 3.0 else 0.0 if d >= 7.0 else (7.0 - d) / (7.0 - 3.0) for d in grid
    ]
    assert trust_weights(grid, 3.0, 7.0).tolist() == expected
    assert [trust_weight(float(d), 3.0, 7.0) for d in grid] == expected


@settings(max_examples=200, deadline=None)
@given(
    a=st.floats(0.0, 50.0),
    b=st.floats(0.0, 50.0),
    t_low=st.floats(0.1, 10.0),
    width=st.floats(0.1, 10.0),
)
def test_trust_weight_is_lipschitz_and_monotone(a, b, t_low, width):
    t_high = t_low + width
    fa, fb = trust_weight(a, t_low, t_high), trust_weight(b, t_low, t_high)
    assert 0.0 <= fa <= 1.0
    assert abs(fa - fb) <= abs(a - b) / (t_high - t_low) + 1e-12
    if a <= b:
        assert fa >= fb


# --- reputation ---


def test_update_reputation():
    state = fresh(2)
    updated = update_reputation(state, {0: 0.0, 1: 1.0}, 0.5)
    assert updated.reputations == {0: 0.5, 1: 1.0}
    assert updated.rounds_observed == 1
    assert state.reputations == {0: 1.0, 1: 1.0}

    fixed = ReputationState(reputations={0: 0.3})
    assert update_reputation(fixed, {0: 0.3}, 0.7).reputations[0] == pytest.approx(0.3)

    with pytest.raises(ReputationError):
        update_reputation(state, {5: 1.0}, 0.5)


def test_reputation_decays_geometrically():
    for rho in (0.5, 0.9, 0.25):
        state = fresh(1)
        for t in range(1, 30):
            state = update_reputation(state, {0: 0.0}, rho)
            assert state.reputations[0] == pytest.approx(rho**t, abs=1e-12)


def test_closed_form_reputation():
    assert closed_form_reputation(0.7, 0.5, []) == 0.7
    assert closed_form_reputation(1.0, 0.9, [0.3] * 200) == pytest.approx(0.3, abs=1e-9)

    rng = np.random.default_rng(12)
    for _ in range(200):
        r0, rho = float(rng.uniform()), float(rng.uniform())
        history = rng.uniform(size=int(rng.integers(0, 51))).tolist()
        state = ReputationState(reputations={0: r0})
        for phi in history:
            state = update_reputation(state, {0: phi}, rho)
        expected = closed_form_reputation(r0, rho, history)
        assert state.reputations[0] == pytest.approx(expected, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(
    r0=st.floats(0.0, 1.0),
    rho=st.floats(0.0, 1.0),
    history=st.lists(st.floats(0.0, 1.0), max_size=50),
)
def test_reputation_stays_in_unit_interval(r0, rho, history):
    state = ReputationState(reputations={0: r0})
    for phi in history:
        state = update_reputation(state, {0: phi}, rho)
        assert 0.0 <= state.reputations[0] <= 1.0


# --- aggregate_hra ---


def test_equal_trust_reduces_to_simple_mean():
    rng = np.random.default_rng(1)
    u = updates_from(rng.normal(scale=0.1, size=(5, 4)))
    params, _, diagnostics = aggregate_hra(u, fresh(5), HraConfig())
    assert (diagnostics.trust_weights == 1.0).all()
    np.testing.assert_array_equal(flatten(params), flatten(simple_mean(u).params))


def test_aggregate_by_hand():
    cfg = HraConfig(t_low=3.0, t_high=7.0)
    params, state, diagnostics = aggregate_hra(one_d(1.0, 1.2, 9.0), fresh(3), cfg)
    assert diagnostics.trust_weights.tolist() == [1.0, 1.0, 0.0]
    assert params.w[0] == pytest.approx(1.1)
    assert not diagnostics.fallback_used
    # aggregation used the reputations from before this round
    assert state.reputations == {0: 1.0, 1: 1.0, 2: 0.5}


def test_fallback_returns_reference():
    u = updates_from([[0.0, 0.0, 1.0], [100.0, 0.0, 2.0], [0.0, 100.0, 30.0]])
    params, state, diagnostics = aggregate_hra(u, fresh(3), HraConfig(t_low=0.1, t_high=0.2))
    assert diagnostics.fallback_used
    assert (diagnostics.trust_weights == 0.0).all()
    np.testing.assert_array_equal(params.w, diagnostics.reference)
    assert params.b == 2.0
    assert effective_weights(diagnostics).tolist() == [0.0, 0.0, 0.0]
    assert state.reputations == {0: 0.5, 1: 0.5, 2: 0.5}


def test_fallback_with_bias_in_reference():
    u = updates_from([[0.0, 1.0], [100.0, 2.0], [-100.0, 30.0]])
    cfg = HraConfig(t_low=0.1, t_high=0.2, anomaly_includes_bias=True, initial_reputation=0.0)
    params, _, diagnostics = aggregate_hra(u, fresh(3, 0.0), cfg)
    assert diagnostics.fallback_used
    np.testing.assert_array_equal(flatten(params), diagnostics.reference)


def test_variants():
    u = one_d(1.0, 1.2, 9.0, 1.1)
    prior = ReputationState(reputations={0: 1.0, 1: 0.2, 2: 1.0, 3: 1.0})

    _, after, d = aggregate_hra(u, prior, HraConfig(variant=HraVariant.ANOMALY_ONLY))
    assert after is prior or after.reputations == prior.reputations
    np.testing.assert_array_equal(d.combined_weights, d.trust_weights)

    _, after, d = aggregate_hra(u, prior, HraConfig(variant=HraVariant.REPUTATION_ONLY))
    np.testing.assert_array_equal(d.combined_weights, prior.vector([0, 1, 2, 3]))
    assert after.reputations[2] == 0.5

    _, _, d = aggregate_hra(u, prior, HraConfig(variant=HraVariant.FULL))
    expected = prior.vector([0, 1, 2, 3]) * d.trust_weights
    np.testing.assert_array_equal(d.combined_weights, expected)


def test_full_equals_anomaly_only_without_momentum():
    rng = np.random.default_rng(6)
    u = updates_from(rng.normal(scale=3.0, size=(6, 3)))
    cfg = HraConfig(rho=0.0, t_low=1.0, t_high=6.0)
    full, _, _ = aggregate_hra(u, fresh(6), cfg)
    anomaly_cfg = cfg.model_copy(update={"variant": HraVariant.ANOMALY_ONLY})
    anomaly, _, _ = aggregate_hra(u, fresh(6), anomaly_cfg)
    np.testing.assert_array_equal(flatten(full), flatten(anomaly))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_aggregate_is_convex_combination(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(scale=4.0, size=(int(rng.integers(2, 9)), 3))
    scores = rng.uniform(size=X.shape[0])
    state = ReputationState(reputations={i: float(r) for i, r in enumerate(scores)})
    params, _, diagnostics = aggregate_hra(updates_from(X), state, HraConfig(t_low=2.0, t_high=6.0))
    if not diagnostics.fallback_used:
        out = flatten(params)
        assert (out >= X.min(axis=0) - 1e-9).all()
        assert (out <= X.max(axis=0) + 1e-9).all()


def test_new_clients_join_at_initial_reputation():
    state = ReputationState(reputations={0: 0.4})
    cfg = HraConfig(initial_reputation=0.8, rho=1.0)
    _, after, _ = aggregate_hra(one_d(0.0, 0.1), state, cfg)
    assert after.reputations == {0: 0.4, 1: 0.8}


def test_hra_aggregator_threads_state():
    aggregator = HraAggregator(HraConfig(t_low=0.5, t_high=1.0), [0, 1, 2])
    u = one_d(0.0, 0.1, 50.0)
    for t in range(1, 4):
        result = aggregator.aggregate(u)
        prior = result.diagnostics["prior_reputation"]
        assert prior.reputations[2] == pytest.approx(0.5 ** (t - 1))
        assert aggregator.reputation.reputations[2] == pytest.approx(0.5**t)
        assert result.weights[2] == 0.0
        assert result.weights.sum() == pytest.approx(1.0)
