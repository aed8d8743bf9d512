import hashlib
from dataclasses import dataclass, replace
from functools import partial

import anyio
import numpy as np
import structlog
from pydantic import ValidationError

from ..config import settings
from ..models.aggregation_models import AggregationResult, HraVariant, UpdateSet
from ..models.attack_models import AttackKind, ClientRoster
from ..models.data_models import FeatureMatrix, PartitionPlan, PreparedData
from ..models.exceptions import ConfigError, ExperimentError, UnknownRuleError
from ..models.learning_models import ModelParams
from ..models.result_models import (
    AblationRow,
    ClientDiagnostic,
    ComparisonRow,
    ExperimentResult,
    LearningRateSweepRow,
    RoundRecord,
    RoundSummary,
    RunResult,
    StudyResult,
    ThresholdSweepRow,
)
from ..models.scenario_models import AGGREGATION_RULES, ScenarioConfig, format_pydantic_errors
from ..models.stats_models import ClassificationMetrics, Summary
from .aggregator_registry import Aggregator, build_aggregator
from .attack_service import (
    apply_post_training_attack,
    assign_attacks,
    client_stream,
    flip_labels,
    sybil_stream,
)
from .data_service import partition_dirichlet, partition_uniform, prepare_dataset
from .metrics_service import classification_metrics, paired_t_test, summarize
from .model_service import lr_schedule, predict_proba, train_local

logger = structlog.stdlib.get_logger()

PARTITION_STREAM = 0
ROSTER_STREAM = 1


def derive_run_seed(master_seed: int, run_index: int) -> int:
    """64-bit run seed from (master seed, run index)."""
    state = np.random.SeedSequence([master_seed, run_index]).generate_state(1, dtype=np.uint64)
    return int(state[0])


@dataclass(frozen=True)
class RunSetup:
    """What stays fixed for a whole run: who holds which rows and who attacks."""

    plan: PartitionPlan
    clients: list[FeatureMatrix]
    roster: ClientRoster


@dataclass(frozen=True)
class RoundOutcome:
    params: ModelParams
    lr: float
    updates: UpdateSet
    aggregation: AggregationResult
    fingerprint: str


def setup_run(cfg: ScenarioConfig, data: PreparedData, run_seed: int) -> RunSetup:
    train = data.train
    if cfg.partition.mode == "uniform":
        plan = partition_uniform(train.n_samples, cfg.clients, [run_seed, PARTITION_STREAM])
    else:
        plan = partition_dirichlet(
            train.y, cfg.clients, cfg.partition.alpha, [run_seed, PARTITION_STREAM]
        )
    roster = assign_attacks(
        cfg.clients,
        cfg.attacks.malicious_fraction,
        cfg.attacks.kinds,
        [run_seed, ROSTER_STREAM],
    )
    return RunSetup(
        plan=plan,
        clients=[train.subset(idx) for idx in plan.assignments],
        roster=roster,
    )


def stream_fingerprint(run_seed: int, round_index: int, setup: RunSetup) -> str:
    """SHA-256 over everything that feeds the clients in one round."""
    digest = hashlib.sha256()
    digest.update(f"{run_seed}:{round_index}".encode())
    for cid, idx in enumerate(setup.plan.assignments):
        digest.update(f"|{cid}:{setup.roster.kind_of(cid)}:".encode())
        digest.update(np.ascontiguousarray(idx, dtype=np.int64).tobytes())
    return digest.hexdigest()


def _client_update(
    global_params: ModelParams,
    data: FeatureMatrix,
    kind: AttackKind,
    cfg: ScenarioConfig,
    lr: float,
    rng: np.random.Generator,
) -> ModelParams:
    # pure work: runs in a worker thread and touches no shared state
    if kind is AttackKind.LABEL_FLIPPING:
        data = replace(data, y=flip_labels(data.y))
    local = train_local(global_params, data, cfg.training, lr)
    return apply_post_training_attack(kind, global_params, local, cfg.attacks, rng)


def _stream_for(
    cfg: ScenarioConfig, kind: AttackKind, run_seed: int, round_index: int, cid: int
) -> np.random.Generator:
    if kind is AttackKind.SYBIL and cfg.attacks.sybil_collusion:
        return sybil_stream(run_seed, round_index)
    return client_stream(run_seed, round_index, cid)


async def train_clients(
    global_params: ModelParams,
    setup: RunSetup,
    cfg: ScenarioConfig,
    lr: float,
    run_seed: int,
    round_index: int,
    workers: int,
) -> list[ModelParams]:
    """Local training for every client; results are ordered by client id whatever the scheduling."""
    jobs = []
    for cid, data in enumerate(setup.clients):
        kind = setup.roster.kind_of(cid)
        rng = _stream_for(cfg, kind, run_seed, round_index, cid)
        jobs.append(partial(_client_update, global_params, data, kind, cfg, lr, rng))

    if workers == 1:
        return [job() for job in jobs]

    results: list[ModelParams | None] = [None] * len(jobs)
    limiter = anyio.CapacityLimiter(workers)

    async def run(position: int):
        results[position] = await anyio.to_thread.run_sync(jobs[position], limiter=limiter)

    async with anyio.create_task_group() as tg:
        for position in range(len(jobs)):
            tg.start_soon(run, position)

    return [r for r in results if r is not None]


async def run_round_async(
    global_params: ModelParams,
    setup: RunSetup,
    cfg: ScenarioConfig,
    aggregator: Aggregator,
    round_index: int,
    run_seed: int,
    workers: int = 1,
) -> RoundOutcome:
    lr = lr_schedule(cfg.training.eta0, cfg.training.gamma, round_index)
    local_params = await train_clients(
        global_params, setup, cfg, lr, run_seed, round_index, workers
    )
    updates = UpdateSet(client_ids=list(range(len(local_params))), params=local_params)
    # sequential barrier: aggregation and any reputation update
    aggregation = aggregator.aggregate(updates)
    fingerprint = stream_fingerprint(run_seed, round_index, setup)
    logger.debug("round.fingerprint", round=round_index, fingerprint=fingerprint)
    return RoundOutcome(
        params=aggregation.params,
        lr=lr,
        updates=updates,
        aggregation=aggregation,
        fingerprint=fingerprint,
    )


def run_round(
    global_params: ModelParams,
    setup: RunSetup,
    cfg: ScenarioConfig,
    aggregator: Aggregator,
    round_index: int,
    run_seed: int,
    workers: int = 1,
) -> RoundOutcome:
    return anyio.run(
        partial(
            run_round_async,
            global_params,
            setup,
            cfg,
            aggregator,
            round_index,
            run_seed,
            workers,
        )
    )


def evaluate(params: ModelParams, test: FeatureMatrix) -> ClassificationMetrics:
    return classification_metrics(predict_proba(params, test.X), test.y)


def _round_record(
    round_index: int,
    outcome: RoundOutcome,
    metrics: ClassificationMetrics,
    roster: ClientRoster,
    aggregator: Aggregator,
) -> RoundRecord:
    ids = outcome.updates.client_ids
    weights = outcome.aggregation.weights
    hra = outcome.aggregation.diagnostics.get("hra")
    prior = outcome.aggregation.diagnostics.get("prior_reputation")
    reputation = aggregator.reputation

    if hra is None or prior is None or reputation is None:
        clients = [
            ClientDiagnostic(
                client_id=cid, attack=roster.kind_of(cid), effective_weight=float(weights[i])
            )
            for i, cid in enumerate(ids)
        ]
        return RoundRecord(
            round=round_index,
            metrics=metrics,
            lr=outcome.lr,
            clients=clients,
            fingerprint=outcome.fingerprint,
        )

    clients = [
        ClientDiagnostic(
            client_id=cid,
            attack=roster.kind_of(cid),
            effective_weight=float(weights[i]),
            anomaly_distance=float(hra.anomaly_distances[i]),
            trust_weight=float(hra.trust_weights[i]),
            prior_reputation=prior.reputations[cid],
            reputation=reputation.reputations[cid],
        )
        for i, cid in enumerate(ids)
    ]
    return RoundRecord(
        round=round_index,
        metrics=metrics,
        lr=outcome.lr,
        mean_anomaly_distance=float(hra.anomaly_distances.mean()),
        reputations=dict(reputation.reputations),
        fallback_used=hra.fallback_used,
        clients=clients,
        fingerprint=outcome.fingerprint,
    )


async def _simulate(
    cfg: ScenarioConfig, run_seed: int, run_index: int, data: PreparedData, workers: int
) -> RunResult:
    rule = cfg.aggregator.rule
    setup = setup_run(cfg, data, run_seed)
    aggregator = build_aggregator(rule, cfg.clients, cfg.rule_config(), cfg.hra_config())
    params = ModelParams.zeros(data.train.n_features)

    records: list[RoundRecord] = []
    trajectory: list[ModelParams] = []
    with structlog.contextvars.bound_contextvars(run=run_index, aggregator=rule):
        logger.info(
            "run.started",
            seed=run_seed,
            malicious=setup.roster.malicious_clients(),
            client_sizes=setup.plan.sizes,
        )
        for r in range(cfg.rounds):
            outcome = await run_round_async(
                params, setup, cfg, aggregator, r, run_seed, workers
            )
            params = outcome.params
            trajectory.append(params)
            metrics = evaluate(params, data.test)
            record = _round_record(r, outcome, metrics, setup.roster, aggregator)
            records.append(record)
            logger.debug(
                "round.completed",
                round=r,
                accuracy=metrics.accuracy,
                lr=outcome.lr,
                mean_anomaly_distance=record.mean_anomaly_distance,
                fallback=record.fallback_used,
            )
        logger.info("run.finished", final_accuracy=records[-1].metrics.accuracy)

    return RunResult(
        run_index=run_index,
        seed=run_seed,
        records=records,
        final_params=params,
        trajectory=trajectory,
    )


def run_simulation(
    cfg: ScenarioConfig,
    run_seed: int,
    run_index: int = 0,
    data: PreparedData | None = None,
    workers: int | None = None,
) -> RunResult:
    """One independent run from a zero model; the test set is scored after every round."""
    data = data if data is not None else prepare_dataset(cfg.data, cfg.seed)
    return anyio.run(
        partial(_simulate, cfg, run_seed, run_index, data, workers or settings.workers)
    )


def _summary_if_present(values: list[float | None]) -> Summary | None:
    present = [v for v in values if v is not None]
    return summarize(present) if len(present) == len(values) else None


def _curves(runs: list[RunResult]) -> list[RoundSummary]:
    curves = []
    for r in range(len(runs[0].records)):
        round_records = [run.records[r] for run in runs]
        curves.append(
            RoundSummary(
                round=r,
                accuracy=summarize([rec.metrics.accuracy for rec in round_records]),
                mean_anomaly_distance=_summary_if_present(
                    [rec.mean_anomaly_distance for rec in round_records]
                ),
                mean_reputation=_summary_if_present(
                    [rec.mean_reputation for rec in round_records]
                ),
            )
        )
    return curves


def run_experiment(
    cfg: ScenarioConfig,
    data: PreparedData | None = None,
    workers: int | None = None,
    label: str | None = None,
) -> ExperimentResult:
    """
    `cfg.runs` runs with seeds derived from (master seed, run index).
    The dataset is prepared once from the master seed and shared by every run.
    """
    label = label or cfg.aggregator.rule
    data = data if data is not None else prepare_dataset(cfg.data, cfg.seed)

    runs = []
    with structlog.contextvars.bound_contextvars(experiment=label):
        for i in range(cfg.runs):
            runs.append(
                run_simulation(cfg, derive_run_seed(cfg.seed, i), i, data, workers)
            )
        finals = [run.final_accuracy for run in runs]
        final = summarize(finals)
        logger.info(
            "experiment.finished", runs=cfg.runs, final_acc_mean=final.mean, final_acc_std=final.std
        )

    return ExperimentResult(
        label=label,
        rule=cfg.aggregator.rule,
        runs=runs,
        curves=_curves(runs),
        final_accuracies=finals,
        final=final,
    )


def _validated(cfg: ScenarioConfig, update: dict) -> ScenarioConfig:
    """Applies nested changes and re-runs validation (model_copy alone skips it)."""
    doc = cfg.to_document()
    for section, values in update.items():
        doc[section] = {**doc[section], **values} if isinstance(values, dict) else values
    try:
        return ScenarioConfig.model_validate(doc)
    except ValidationError as e:
        message, fields = format_pydantic_errors(e)
        raise ConfigError(message, keys=list(fields)) from e


def sweep_thresholds(
    cfg: ScenarioConfig,
    pairs: list[tuple[float, float]],
    data: PreparedData | None = None,
    workers: int | None = None,
) -> StudyResult:
    """One HRA experiment per (t_low, t_high); changes are in points against the first pair."""
    if not pairs:
        raise ExperimentError("threshold sweep needs at least one pair")
    data = data if data is not None else prepare_dataset(cfg.data, cfg.seed)

    experiments = []
    for t_low, t_high in pairs:
        variant = _validated(
            cfg, {"aggregator": {"rule": "hra"}, "hra": {"t_low": t_low, "t_high": t_high}}
        )
        experiments.append(
            run_experiment(variant, data, workers, label=f"hra(t_low={t_low:g} t_high={t_high:g})")
        )

    baseline = experiments[0].final.mean
    rows = [
        ThresholdSweepRow(
            t_low=t_low,
            t_high=t_high,
            final_acc_mean=exp.final.mean,
            final_acc_std=exp.final.std,
            change_pp=(exp.final.mean - baseline) * 100.0,
        )
        for (t_low, t_high), exp in zip(pairs, experiments)
    ]
    return StudyResult(kind="sweep_thresholds", experiments=experiments, rows=list(rows))


def sweep_learning_rates(
    cfg: ScenarioConfig,
    rates: list[float],
    data: PreparedData | None = None,
    workers: int | None = None,
) -> StudyResult:
    """One experiment per initial learning rate; the first rate is the baseline."""
    if not rates:
        raise ExperimentError("learning-rate sweep needs at least one rate")
    data = data if data is not None else prepare_dataset(cfg.data, cfg.seed)
    rule = cfg.aggregator.rule

    experiments = [
        run_experiment(
            _validated(cfg, {"training": {"eta0": eta0}}),
            data,
            workers,
            label=f"{rule}(eta0={eta0:g})",
        )
        for eta0 in rates
    ]
    baseline = experiments[0].final.mean
    rows = [
        LearningRateSweepRow(
            eta0=eta0,
            final_acc_mean=exp.final.mean,
            final_acc_std=exp.final.std,
            change_pp=(exp.final.mean - baseline) * 100.0,
        )
        for eta0, exp in zip(rates, experiments)
    ]
    return StudyResult(kind="sweep_lr", experiments=experiments, rows=list(rows))


def ablate_synergy(
    cfg: ScenarioConfig, data: PreparedData | None = None, workers: int | None = None
) -> StudyResult:
    """Full HRA against its anomaly-only and reputation-only halves; drop_pp = variant - full."""
    if cfg.aggregator.rule != "hra":
        raise ExperimentError(
            f"synergy ablation needs aggregator.rule = 'hra', got '{cfg.aggregator.rule}'"
        )
    data = data if data is not None else prepare_dataset(cfg.data, cfg.seed)

    experiments = [
        run_experiment(
            _validated(cfg, {"hra": {"variant": variant.value}}),
            data,
            workers,
            label=f"hra({variant.value})",
        )
        for variant in HraVariant
    ]
    full = experiments[0].final.mean
    rows = [
        AblationRow(
            variant=variant.value,
            final_acc_mean=exp.final.mean,
            final_acc_std=exp.final.std,
            drop_pp=(exp.final.mean - full) * 100.0,
        )
        for variant, exp in zip(HraVariant, experiments)
    ]
    return StudyResult(kind="ablation", experiments=experiments, rows=list(rows))


def compare_aggregators(
    cfg: ScenarioConfig,
    rules: list[str],
    data: PreparedData | None = None,
    workers: int | None = None,
) -> StudyResult:
    """
    Same data, partitions, rosters and client streams for every rule; only
    the aggregator changes. Each rule is paired-t-tested against the first.
    """
    if len(rules) < 2:
        raise ExperimentError(f"comparison needs at least two rules, got {len(rules)}")
    duplicates = sorted({r for r in rules if rules.count(r) > 1})
    if duplicates:
        raise ExperimentError(f"duplicate rules in comparison: {', '.join(duplicates)}")
    unknown = [r for r in rules if r not in AGGREGATION_RULES]
    if unknown:
        raise UnknownRuleError(
            f"unknown aggregation rule '{unknown[0]}'; available: {', '.join(AGGREGATION_RULES)}"
        )
    data = data if data is not None else prepare_dataset(cfg.data, cfg.seed)

    experiments = [run_experiment(cfg.with_rule(rule), data, workers, label=rule) for rule in rules]
    reference = experiments[0]

    rows = [ComparisonRow(rule=reference.rule, final=reference.final)]
    for exp in experiments[1:]:
        ttest = None
        if cfg.runs >= 2:
            ttest = paired_t_test(reference.final_accuracies, exp.final_accuracies)
        rows.append(ComparisonRow(rule=exp.rule, final=exp.final, ttest=ttest))
    if cfg.runs < 2:
        logger.warning("compare.ttest_skipped", runs=cfg.runs, reason="needs at least two runs")
    return StudyResult(kind="compare", experiments=experiments, rows=list(rows))
