#!/usr/bin/env python3
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated

import typer
from rich.console import Console

from src.dependencies import get_results_repository, get_settings
from src.logging_conf import configure_logging
from src.models.exceptions import ConfigError, FedRepError
from src.models.result_models import ExperimentResult, StudyResult
from src.models.scenario_models import ScenarioConfig
from src.repositories.dataset_repository import write_dataset_csv
from src.services.data_service import generate_synthetic
from src.services.report_service import write_results
from src.services.scenario_service import build_manifest, output_directory, parse_config
from src.services.simulation_service import (
    ablate_synergy,
    compare_aggregators,
    run_experiment,
    sweep_learning_rates,
    sweep_thresholds,
)

app = typer.Typer(
    help="fedrep: federated learning under adversarial clients, with reputation-based aggregation",
    add_completion=False,
    rich_markup_mode="rich",
)

err_console = Console(stderr=True)

ConfigOption = Annotated[
    Path, typer.Option("--config", "-c", help="Scenario TOML file or a run manifest.json")
]
OutOption = Annotated[
    Path | None, typer.Option("--out", "-o", help="Results root (default: FEDREP_RESULTS_DIR)")
]
SetOption = Annotated[
    list[str] | None,
    typer.Option("--set", "-s", help="Override a dotted key, e.g. hra.t_low=5.0 (repeatable)"),
]
SeedOption = Annotated[int | None, typer.Option("--seed", min=0, help="Override the master seed")]
RunsOption = Annotated[
    int | None, typer.Option("--runs", min=1, help="Override the number of runs")
]
WorkersOption = Annotated[
    int | None,
    typer.Option("--workers", min=1, help="Client-training threads (default: FEDREP_WORKERS)"),
]


@app.callback()
def main(
    quiet: Annotated[bool, typer.Option("--quiet", "-q", help="Only warnings and errors")] = False,
    verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Per-round detail")] = False,
):
    level = "WARNING" if quiet else "DEBUG" if verbose else None
    configure_logging(get_settings(), level=level)


@contextmanager
def diagnostics() -> Iterator[None]:
    """Domain errors become one diagnostic on stderr and exit status 1."""
    try:
        yield
    except FedRepError as e:
        err_console.print(f"[bold red]Error:[/bold red] {e}", highlight=False)
        keys = getattr(e, "keys", None)
        if keys:
            err_console.print(f"[dim]offending keys: {', '.join(keys)}[/dim]", highlight=False)
        raise typer.Exit(code=1)


def load_scenario(
    config: Path, overrides: list[str] | None, seed: int | None, runs: int | None
) -> ScenarioConfig:
    extra = list(overrides or [])
    if seed is not None:
        extra.append(f"seed={seed}")
    if runs is not None:
        extra.append(f"runs={runs}")
    return parse_config(config, extra)


def report(
    command: str,
    cfg: ScenarioConfig,
    config: Path,
    out: Path | None,
    experiments: list[ExperimentResult],
    study: StudyResult | None = None,
):
    directory = output_directory(out or get_settings().results_dir, cfg, config, command)
    repository = get_results_repository(directory)
    write_results(repository, experiments, build_manifest(command, cfg, experiments), study)

    for exp in experiments:
        typer.echo(
            f"{exp.label}: final accuracy {exp.final.mean:.4f} ± {exp.final.std:.4f} "
            f"over {exp.final.n} run(s)"
        )
    typer.echo(f"results: {repository.location}")


# --- Experiments ---


@app.command()
def run(
    config: ConfigOption,
    out: OutOption = None,
    set_: SetOption = None,
    seed: SeedOption = None,
    runs: RunsOption = None,
    workers: WorkersOption = None,
):
    """[bold cyan]RUN[/bold cyan] one experiment with the configured aggregator."""
    with diagnostics():
        cfg = load_scenario(config, set_, seed, runs)
        experiment = run_experiment(cfg, workers=workers)
        report("run", cfg, config, out, [experiment])


@app.command()
def compare(
    config: ConfigOption,
    out: OutOption = None,
    set_: SetOption = None,
    seed: SeedOption = None,
    runs: RunsOption = None,
    workers: WorkersOption = None,
):
    """[bold cyan]COMPARE[/bold cyan] compare.rules; paired t-tests against the first rule."""
    with diagnostics():
        cfg = load_scenario(config, set_, seed, runs)
    if len(cfg.compare.rules) < 2:
        raise typer.BadParameter(
            f"compare needs at least two rules, got {len(cfg.compare.rules)}",
            param_hint="compare.rules",
        )
    with diagnostics():
        study = compare_aggregators(cfg, cfg.compare.rules, workers=workers)
        report("compare", cfg, config, out, study.experiments, study)


@app.command("sweep-thresholds")
def sweep_thresholds_command(
    config: ConfigOption,
    out: OutOption = None,
    set_: SetOption = None,
    seed: SeedOption = None,
    runs: RunsOption = None,
    workers: WorkersOption = None,
):
    """[bold yellow]SWEEP[/bold yellow] HRA over sweep.threshold_pairs against the first pair."""
    with diagnostics():
        cfg = load_scenario(config, set_, seed, runs)
        study = sweep_thresholds(cfg, cfg.sweep.threshold_pairs, workers=workers)
        report("sweep-thresholds", cfg, config, out, study.experiments, study)


@app.command("sweep-lr")
def sweep_lr_command(
    config: ConfigOption,
    out: OutOption = None,
    set_: SetOption = None,
    seed: SeedOption = None,
    runs: RunsOption = None,
    workers: WorkersOption = None,
):
    """[bold yellow]SWEEP[/bold yellow] the initial learning rate over sweep.learning_rates."""
    with diagnostics():
        cfg = load_scenario(config, set_, seed, runs)
        study = sweep_learning_rates(cfg, cfg.sweep.learning_rates, workers=workers)
        report("sweep-lr", cfg, config, out, study.experiments, study)


@app.command("ablate-synergy")
def ablate_synergy_command(
    config: ConfigOption,
    out: OutOption = None,
    set_: SetOption = None,
    seed: SeedOption = None,
    runs: RunsOption = None,
    workers: WorkersOption = None,
):
    """[bold magenta]ABLATE[/bold magenta] HRA: full against anomaly-only and reputation-only."""
    with diagnostics():
        cfg = load_scenario(config, set_, seed, runs)
        study = ablate_synergy(cfg, workers=workers)
        report("ablate-synergy", cfg, config, out, study.experiments, study)


# --- Utilities ---


@app.command("gen-data")
def gen_data(
    config: ConfigOption,
    out: OutOption = None,
    set_: SetOption = None,
    seed: SeedOption = None,
):
    """[bold white]GENERATE[/bold white] train.csv and test.csv from the synthetic data section."""
    with diagnostics():
        cfg = load_scenario(config, set_, seed, None)
        if cfg.data.source != "synthetic":
            raise ConfigError("gen-data needs data.source = 'synthetic'", keys=["data.source"])
        train, test = generate_synthetic(cfg.data.synthetic, cfg.seed)
        directory = output_directory(out or get_settings().results_dir, cfg, config, "gen-data")
        for name, matrix in (("train.csv", train), ("test.csv", test)):
            path = write_dataset_csv(matrix, directory / name)
            typer.echo(f"{name}: {matrix.n_samples} rows -> {path}")


@app.command("validate-config")
def validate_config(
    config: ConfigOption,
    set_: SetOption = None,
    show: Annotated[bool, typer.Option("--show", help="Print the fully defaulted config")] = False,
):
    """[bold green]VALIDATE[/bold green] a scenario file without running anything."""
    with diagnostics():
        cfg = load_scenario(config, set_, None, None)
    if show:
        typer.echo(cfg.model_dump_json(indent=2, exclude={"hra": {"geomed"}}))
    typer.echo(f"ok: {config} (rule={cfg.aggregator.rule}, runs={cfg.runs}, rounds={cfg.rounds})")


if __name__ == "__main__":
    app()
