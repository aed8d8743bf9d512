from typing import Any

import pandas as pd
import structlog

from ..models.result_models import ComparisonRow, ExperimentResult, StudyResult
from ..repositories.results_repository import ResultsRepository

logger = structlog.stdlib.get_logger()

ROUNDS_COLUMNS = [
    "run",
    "round",
    "aggregator",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "roc_auc",
    "mean_anomaly_distance",
    "mean_reputation",
    "lr",
]
SUMMARY_COLUMNS = [
    "aggregator",
    "final_acc_mean",
    "final_acc_std",
    "final_acc_stderr",
    "p_value_vs_reference",
]
CURVES_COLUMNS = [
    "aggregator",
    "round",
    "accuracy_mean",
    "accuracy_std",
    "accuracy_stderr",
    "mean_anomaly_distance_mean",
    "mean_reputation_mean",
]
CLIENTS_COLUMNS = [
    "run",
    "round",
    "aggregator",
    "client_id",
    "attack",
    "anomaly_distance",
    "trust_weight",
    "prior_reputation",
    "reputation",
    "effective_weight",
]

ROUNDS_COMMENT = (
    "precision and recall are 0 when their denominator is 0 (F1 is then 0); "
    "mean_anomaly_distance and mean_reputation are empty for rules other than hra"
)

STUDY_FILES = {
    "sweep_thresholds": "sweep.csv",
    "sweep_lr": "sweep.csv",
    "ablation": "ablation.csv",
}


def rounds_frame(experiments: list[ExperimentResult]) -> pd.DataFrame:
    rows = [
        {
            "run": run.run_index,
            "round": rec.round,
            "aggregator": exp.label,
            "accuracy": rec.metrics.accuracy,
            "precision": rec.metrics.precision,
            "recall": rec.metrics.recall,
            "f1": rec.metrics.f1,
            "roc_auc": rec.metrics.roc_auc,
            "mean_anomaly_distance": rec.mean_anomaly_distance,
            "mean_reputation": rec.mean_reputation,
            "lr": rec.lr,
        }
        for exp in experiments
        for run in exp.runs
        for rec in run.records
    ]
    return pd.DataFrame(rows, columns=ROUNDS_COLUMNS)


def summary_frame(
    experiments: list[ExperimentResult], p_values: dict[str, float | None] | None = None
) -> pd.DataFrame:
    p_values = p_values or {}
    rows = [
        {
            "aggregator": exp.label,
            "final_acc_mean": exp.final.mean,
            "final_acc_std": exp.final.std,
            "final_acc_stderr": exp.final.stderr,
            "p_value_vs_reference": p_values.get(exp.label),
        }
        for exp in experiments
    ]
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def curves_frame(experiments: list[ExperimentResult]) -> pd.DataFrame:
    rows = [
        {
            "aggregator": exp.label,
            "round": point.round,
            "accuracy_mean": point.accuracy.mean,
            "accuracy_std": point.accuracy.std,
            "accuracy_stderr": point.accuracy.stderr,
            "mean_anomaly_distance_mean": point.mean_anomaly_distance.mean
            if point.mean_anomaly_distance
            else None,
            "mean_reputation_mean": point.mean_reputation.mean if point.mean_reputation else None,
        }
        for exp in experiments
        for point in exp.curves
    ]
    return pd.DataFrame(rows, columns=CURVES_COLUMNS)


def clients_frame(experiments: list[ExperimentResult]) -> pd.DataFrame:
    rows = [
        {
            "run": run.run_index,
            "round": rec.round,
            "aggregator": exp.label,
            "client_id": client.client_id,
            "attack": client.attack.value,
            "anomaly_distance": client.anomaly_distance,
            "trust_weight": client.trust_weight,
            "prior_reputation": client.prior_reputation,
            "reputation": client.reputation,
            "effective_weight": client.effective_weight,
        }
        for exp in experiments
        for run in exp.runs
        for rec in run.records
        for client in rec.clients
    ]
    return pd.DataFrame(rows, columns=CLIENTS_COLUMNS)


def study_frame(study: StudyResult) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump() for row in study.rows])


def comparison_p_values(study: StudyResult) -> dict[str, float | None]:
    return {
        row.rule: row.ttest.p_value if row.ttest else None
        for row in study.rows
        if isinstance(row, ComparisonRow)
    }


def write_results(
    repository: ResultsRepository,
    experiments: list[ExperimentResult],
    manifest: dict[str, Any],
    study: StudyResult | None = None,
) -> None:
    """Writes the four per-experiment tables, the study table if any, and manifest.json."""
    p_values = comparison_p_values(study) if study is not None else {}

    repository.save_table("rounds.csv", rounds_frame(experiments), comment=ROUNDS_COMMENT)
    repository.save_table("summary.csv", summary_frame(experiments, p_values))
    repository.save_table("curves.csv", curves_frame(experiments))
    repository.save_table("clients.csv", clients_frame(experiments))
    if study is not None and study.kind in STUDY_FILES:
        repository.save_table(STUDY_FILES[study.kind], study_frame(study))
    repository.save_document("manifest.json", manifest)

    logger.info("results.written", location=repository.location, experiments=len(experiments))
