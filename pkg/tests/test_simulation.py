import numpy as np
import pytest
from conftest import scenario

from src.models.exceptions import ConfigError, ExperimentError, UnknownRuleError
from src.models.learning_models import ModelParams
from src.services.aggregator_registry import build_aggregator
from src.services.data_service import prepare_dataset
from src.services.model_service import lr_schedule, train_local
from src.services.simulation_service import (
    ablate_synergy,
    compare_aggregators,
    derive_run_seed,
    run_experiment,
    run_round,
    run_simulation,
    setup_run,
    sweep_learning_rates,
    sweep_thresholds,
)

BENIGN_HRA = {
    "partition": {"mode": "uniform"},
    "hra": {"t_low": 50.0, "t_high": 100.0},
}


def prepared(cfg):
    return prepare_dataset(cfg.data, cfg.seed)


def test_run_seeds_are_stable_and_distinct():
    seeds = [derive_run_seed(7, i) for i in range(5)]
    assert seeds == [derive_run_seed(7, i) for i in range(5)]
    assert len(set(seeds)) == 5
    assert derive_run_seed(8, 0) != seeds[0]
    assert all(0 <= s < 2**64 for s in seeds)


def test_single_client_round_is_local_training():
    cfg = scenario(clients=1, aggregator={"rule": "simple_mean"})
    data = prepared(cfg)
    seed = derive_run_seed(cfg.seed, 0)
    setup = setup_run(cfg, data, seed)
    aggregator = build_aggregator("simple_mean", 1, cfg.rule_config(), cfg.hra_config())
    start = ModelParams.zeros(data.train.n_features)

    outcome = run_round(start, setup, cfg, aggregator, 0, seed)

    lr = lr_schedule(cfg.training.eta0, cfg.training.gamma, 0)
    expected = train_local(start, setup.clients[0], cfg.training, lr)
    assert outcome.lr == lr
    np.testing.assert_array_equal(outcome.params.w, expected.w)
    assert outcome.params.b == expected.b


def test_exploding_updates_trigger_fallback():
    cfg = scenario(
        clients=2,
        rounds=2,
        partition={"mode": "dirichlet", "alpha": 0.1},
        attacks={"malicious_fraction": 1.0, "kinds": ["sign_flipping"], "amplification": 1e6},
    )
    result = run_simulation(cfg, derive_run_seed(cfg.seed, 0))
    first = result.records[0]
    assert first.fallback_used
    assert all(c.effective_weight == 0.0 for c in first.clients)
    assert np.isfinite(result.final_params.w).all()


def test_worker_count_does_not_change_results():
    cfg = scenario(
        attacks={"malicious_fraction": 0.5, "kinds": ["noise", "sybil", "label_flipping"]}
    )
    data = prepared(cfg)
    seed = derive_run_seed(cfg.seed, 0)
    inline = run_simulation(cfg, seed, data=data, workers=1)
    threaded = run_simulation(cfg, seed, data=data, workers=4)

    assert [r.model_dump() for r in inline.records] == [r.model_dump() for r in threaded.records]
    np.testing.assert_array_equal(inline.final_params.w, threaded.final_params.w)
    assert inline.final_params.b == threaded.final_params.b


def test_benign_hra_matches_simple_mean():
    hra_cfg = scenario(rounds=20, runs=1, **BENIGN_HRA)
    mean_cfg = hra_cfg.with_rule("simple_mean")
    data = prepared(hra_cfg)
    seed = derive_run_seed(hra_cfg.seed, 0)

    hra = run_simulation(hra_cfg, seed, data=data)
    mean = run_simulation(mean_cfg, seed, data=data)

    assert len(hra.trajectory) == 20
    for a, b in zip(hra.trajectory, mean.trajectory):
        np.testing.assert_array_equal(a.w, b.w)
        assert a.b == b.b
    assert all(r.mean_reputation == 1.0 for r in hra.records)


def test_persistent_outlier_reputation_decays():
    cfg = scenario(
        clients=5,
        rounds=6,
        runs=1,
        partition={"mode": "uniform"},
        attacks={"malicious_fraction": 0.2, "kinds": ["sybil"], "sybil_scale": 1e4},
    )
    result = run_simulation(cfg, derive_run_seed(cfg.seed, 0))
    attacker = next(c.client_id for c in result.records[0].clients if c.attack == "sybil")
    for record in result.records:
        assert record.reputations[attacker] == pytest.approx(0.5 ** (record.round + 1), abs=1e-12)
        diagnostic = record.clients[attacker]
        assert diagnostic.prior_reputation == pytest.approx(0.5**record.round, abs=1e-12)
        assert diagnostic.trust_weight == 0.0
        assert diagnostic.effective_weight == 0.0


def test_memoryless_records_leave_hra_fields_empty(small_scenario, small_data):
    cfg = small_scenario.with_rule("krum")
    result = run_simulation(cfg, derive_run_seed(cfg.seed, 0), data=small_data)
    for record in result.records:
        assert record.mean_anomaly_distance is None
        assert record.reputations is None
        assert record.mean_reputation is None
        assert record.fallback_used is None
        assert sum(c.effective_weight for c in record.clients) == pytest.approx(1.0)


def test_experiment_shape(small_scenario, small_data):
    experiment = run_experiment(small_scenario, small_data)
    assert experiment.label == "hra"
    assert len(experiment.runs) == 2
    assert [len(run.records) for run in experiment.runs] == [4, 4]
    assert [c.round for c in experiment.curves] == [0, 1, 2, 3]
    assert experiment.final_accuracies == [run.final_accuracy for run in experiment.runs]
    assert experiment.final.n == 2
    assert experiment.curves[-1].mean_reputation is not None
    for run in experiment.runs:
        assert len(run.records[0].clients) == small_scenario.clients
        np.testing.assert_array_equal(run.trajectory[-1].w, run.final_params.w)


def test_experiment_is_reproducible(small_scenario, small_data):
    first = run_experiment(small_scenario, small_data)
    second = run_experiment(small_scenario, small_data)
    assert first.final_accuracies == second.final_accuracies
    assert [r.seed for r in first.runs] == [r.seed for r in second.runs]


def test_threshold_sweep():
    cfg = scenario(rounds=2, runs=2)
    study = sweep_thresholds(cfg, [(3.0, 7.0), (2.0, 6.0)])
    assert study.kind == "sweep_thresholds"
    assert [e.label for e in study.experiments] == [
        "hra(t_low=3 t_high=7)",
        "hra(t_low=2 t_high=6)",
    ]
    assert [(row.t_low, row.t_high) for row in study.rows] == [(3.0, 7.0), (2.0, 6.0)]
    assert study.rows[0].change_pp == 0.0
    second = study.experiments[1].final.mean - study.experiments[0].final.mean
    assert study.rows[1].change_pp == pytest.approx(second * 100.0)


def test_threshold_sweep_rejects_bad_pairs():
    cfg = scenario(rounds=1, runs=1)
    with pytest.raises(ExperimentError):
        sweep_thresholds(cfg, [])
    with pytest.raises(ConfigError, match="t_low"):
        sweep_thresholds(cfg, [(7.0, 3.0)])


def test_learning_rate_sweep():
    cfg = scenario(rounds=2, runs=1, aggregator={"rule": "simple_mean"})
    study = sweep_learning_rates(cfg, [0.1, 0.01])
    assert study.kind == "sweep_lr"
    assert [e.label for e in study.experiments] == [
        "simple_mean(eta0=0.1)",
        "simple_mean(eta0=0.01)",
    ]
    assert [row.eta0 for row in study.rows] == [0.1, 0.01]
    assert study.rows[0].change_pp == 0.0
    with pytest.raises(ExperimentError):
        sweep_learning_rates(cfg, [])


def test_synergy_ablation():
    cfg = scenario(
        rounds=2,
        runs=2,
        attacks={"malicious_fraction": 0.5, "kinds": ["sign_flipping"]},
    )
    study = ablate_synergy(cfg)
    assert study.kind == "ablation"
    assert [row.variant for row in study.rows] == ["full", "anomaly_only", "reputation_only"]
    assert [e.label for e in study.experiments] == [
        "hra(full)",
        "hra(anomaly_only)",
        "hra(reputation_only)",
    ]
    assert study.rows[0].drop_pp == 0.0


def test_synergy_ablation_needs_hra():
    with pytest.raises(ExperimentError):
        ablate_synergy(scenario(rounds=1, runs=1, aggregator={"rule": "krum"}))


def test_comparison_shares_everything_but_the_rule():
    cfg = scenario(rounds=3, runs=3, **BENIGN_HRA)
    study = compare_aggregators(cfg, ["simple_mean", "hra", "coordinate_median"])
    assert study.kind == "compare"
    assert [row.rule for row in study.rows] == ["simple_mean", "hra", "coordinate_median"]
    assert study.rows[0].ttest is None

    # identical finals: the paired test carries no evidence
    hra_row = study.rows[1]
    assert hra_row.ttest is not None
    assert hra_row.ttest.degenerate
    assert hra_row.ttest.p_value == 1.0

    fingerprints = [
        [rec.fingerprint for run in exp.runs for rec in run.records] for exp in study.experiments
    ]
    assert fingerprints[0] == fingerprints[1] == fingerprints[2]
    assert all(fingerprints[0])


def test_comparison_with_one_run_skips_ttest():
    cfg = scenario(rounds=1, runs=1)
    study = compare_aggregators(cfg, ["simple_mean", "krum"])
    assert all(row.ttest is None for row in study.rows)


@pytest.mark.parametrize(
    "rules,error",
    [
        (["hra"], ExperimentError),
        (["hra", "krum", "hra"], ExperimentError),
        (["hra", "fedavg"], UnknownRuleError),
    ],
)
def test_comparison_rejects_bad_rule_lists(rules, error):
    with pytest.raises(error):
        compare_aggregators(scenario(rounds=1, runs=1), rules)
