"""
Command-line interface: dataset generation, oracle self-test, training,
evaluation and comparison tables.
"""

import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import click
import yaml
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.progress import BarColumn, Progress, TextColumn, TimeElapsedColumn
from rich.table import Table

from ..application.evaluation import EvaluateModelUseCase, compare_reports
from ..application.generate_dataset import GenerateDatasetUseCase, generate_rollouts
from ..application.oracle_self_test import OracleSelfTestUseCase
from ..application.training import TrainModelUseCase, TrainingRun
from ..domain.entities import ComparisonTable, EvalReport, ExperimentConfig, ModelKind
from ..domain.errors import PMPError
from ..infrastructure.config_loader import effective_config, load_experiment_configuration
from ..infrastructure.dataset_store import read_dataset
from ..infrastructure.report_store import read_metrics, read_reports, write_reports

# Global console for rich output
console = Console()

EVAL_SEED_OFFSET = 1
OOD_SEED_OFFSET = 2


def _setup_logging(verbose: bool) -> None:
    logger = logging.getLogger("pmp_reasoner")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    logger.addHandler(RichHandler(console=console, show_path=False, markup=False))
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    logger.propagate = False


def _print_effective_config(command: str, values: Dict[str, Any]) -> None:
    console.print(
        f"effective config ({command}): {json.dumps(values, sort_keys=True)}",
        markup=False,
        soft_wrap=True,
    )


def _fail(ctx: click.Context, error: Exception) -> None:
    console.print(f"[red]Error:[/red] {escape(str(error))}")
    if ctx.obj.get("verbose"):
        console.print_exception()
    sys.exit(1)


@click.group(invoke_without_command=True)
@click.option("--config", "-c", type=click.Path(exists=True, path_type=Path),
              help="Experiment configuration (default: config/desk.yml)")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging and tracebacks")
@click.pass_context
def cli(ctx: click.Context, config: Optional[Path], verbose: bool) -> None:
    """
    Persistent Message Passing on persistent segment trees.

    Generate rollout datasets, verify the oracle, train PMP and the baseline
    MPNNs teacher-forced, and evaluate them on free rollouts.
    """
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config
    ctx.obj["verbose"] = verbose
    _setup_logging(verbose)

    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


@cli.command("gen")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--k", "size", type=click.IntRange(min=1), default=5, show_default=True, help="Array size K")
@click.option("--updates", type=click.IntRange(min=0), default=5, show_default=True)
@click.option("--queries", type=click.IntRange(min=0), default=5, show_default=True)
@click.option("--count", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--out", "output", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.pass_context
def generate(ctx: click.Context, seed: int, size: int, updates: int, queries: int, count: int, output: Path) -> None:
    """Sample a rollout dataset as JSON lines."""
    _print_effective_config(
        "gen",
        {"seed": seed, "k": size, "updates": updates, "queries": queries, "count": count, "out": str(output)},
    )
    try:
        GenerateDatasetUseCase().execute(seed, size, updates, queries, count, output)
    except PMPError as e:
        _fail(ctx, e)
    console.print(f"[green]✓[/green] {count} rollouts written to {output}")


@cli.command("oracle-test")
@click.option("--k-max", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--trials", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--updates", type=click.IntRange(min=0), default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def oracle_test(ctx: click.Context, k_max: int, trials: int, updates: int, seed: int) -> None:
    """Check every snapshot query of random rollouts against brute force."""
    _print_effective_config("oracle-test", {"k_max": k_max, "trials": trials, "updates": updates, "seed": seed})
    result = OracleSelfTestUseCase(seed).execute(k_max, trials, updates)

    if ctx.obj.get("verbose"):
        table = Table(title="Mean node count after each update", header_style="bold magenta")
        table.add_column("K", style="cyan")
        table.add_column("Empirical", style="green")
        table.add_column("Expected", style="yellow")
        for size in sorted(result.growth):
            table.add_row(
                str(size),
                " ".join(f"{v:.1f}" for v in result.growth[size]),
                " ".join(f"{v:.1f}" for v in result.expected_growth[size]),
            )
        console.print(table)

    if not result.passed:
        console.print(f"[red]✗[/red] {escape(result.message)}")
        sys.exit(1)
    console.print(f"[green]✓[/green] {result.message} ({result.queries_checked} queries)")


def _train_config(
    ctx: click.Context,
    config_path: Optional[Path],
    seeds: Tuple[int, ...],
    model: Optional[str],
    iterations: Optional[int],
) -> ExperimentConfig:
    overrides: Dict[str, Any] = {}
    if seeds:
        overrides["seeds"] = list(seeds)
    if model:
        overrides["model"] = model
    if iterations is not None:
        overrides["iterations"] = iterations
    return load_experiment_configuration(config_path or ctx.obj.get("config_path"), overrides)


def _display_training(runs: List[TrainingRun], rows: List[Dict[str, str]]) -> None:
    last: Dict[str, Dict[str, str]] = {row["seed"]: row for row in rows}
    latest_eval: Dict[str, Dict[str, str]] = {
        row["seed"]: row for row in rows if row["eval_query_accuracy"] or row["eval_ood_query_accuracy"]
    }
    table = Table(title="Training summary", header_style="bold magenta")
    table.add_column("Seed", style="cyan")
    table.add_column("Iteration")
    table.add_column("Total loss", style="yellow")
    table.add_column("Eval acc", style="green")
    table.add_column("OOD acc", style="green")
    table.add_column("Checkpoint")
    for run in runs:
        row = last.get(str(run.seed), {})
        evaluated = latest_eval.get(str(run.seed), {})
        table.add_row(
            str(run.seed),
            row.get("iteration", "-"),
            f"{float(row['total']):.4f}" if row else "-",
            _fraction(evaluated.get("eval_query_accuracy")),
            _fraction(evaluated.get("eval_ood_query_accuracy")),
            str(run.checkpoint),
        )
    console.print(table)


def _fraction(raw: Optional[str]) -> str:
    return f"{float(raw):.3f}" if raw else "-"


@cli.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              help="Overrides the group-level --config")
@click.option("--data", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Training rollouts; sampled from the config when omitted")
@click.option("--out", "output", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--seed", "seeds", type=int, multiple=True, help="Training seed(s); repeatable")
@click.option("--model", type=click.Choice([k.value for k in ModelKind]), help="Model kind")
@click.option("--iterations", type=click.IntRange(min=0), help="Override the iteration count")
@click.pass_context
def train(
    ctx: click.Context,
    config_path: Optional[Path],
    data: Optional[Path],
    output: Path,
    seeds: Tuple[int, ...],
    model: Optional[str],
    iterations: Optional[int],
) -> None:
    """Teacher-forced training, one checkpoint per seed."""
    try:
        config = _train_config(ctx, config_path, seeds, model, iterations)
        values = effective_config(config)
        values["data"] = str(data) if data else None
        _print_effective_config("train", values)

        if data:
            rollouts = read_dataset(data)
        else:
            rollouts = generate_rollouts(
                config.seed, config.k, config.updates, config.queries, config.train_rollouts
            )
        eval_rollouts = generate_rollouts(
            config.seed + EVAL_SEED_OFFSET, config.k, config.updates, config.queries, config.eval_rollouts
        )
        ood_rollouts = generate_rollouts(
            config.seed + OOD_SEED_OFFSET,
            config.eval_k,
            config.eval_updates,
            config.eval_queries,
            config.eval_rollouts,
        )

        output.mkdir(parents=True, exist_ok=True)
        with open(output / "config.yml", "w", encoding="utf-8") as f:
            yaml.safe_dump(effective_config(config), f, sort_keys=True)

        with Progress(
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            TextColumn("{task.completed}/{task.total}"),
            TimeElapsedColumn(),
            console=console,
            transient=True,
        ) as progress:
            task = progress.add_task(f"training {config.model.value}", total=config.iterations * len(config.seeds))
            use_case = TrainModelUseCase(
                config,
                output,
                eval_rollouts,
                progress=lambda *_: progress.advance(task),
                ood_rollouts=ood_rollouts,
            )
            runs = use_case.execute(rollouts)
    except (PMPError, FileNotFoundError) as e:
        _fail(ctx, e)

    _display_training(runs, read_metrics(output / "metrics.csv"))


@cli.command("eval")
@click.option("--checkpoint", "checkpoints", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              multiple=True, required=True, help="One checkpoint per training seed; repeatable")
@click.option("--data", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--model", type=click.Choice([k.value for k in ModelKind]),
              help="Expected model kind (default: read from the checkpoint)")
@click.option("--name", "dataset_name", help="Dataset label in the report (default: file stem)")
@click.option("--out", "output", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False, path_type=Path),
              help="Write per-step masks and answers of the first checkpoint as JSON lines")
@click.pass_context
def evaluate(
    ctx: click.Context,
    checkpoints: Tuple[Path, ...],
    data: Path,
    model: Optional[str],
    dataset_name: Optional[str],
    output: Path,
    trace_path: Optional[Path],
) -> None:
    """Free-rollout evaluation of trained checkpoints."""
    _print_effective_config(
        "eval",
        {
            "checkpoints": [str(p) for p in checkpoints],
            "data": str(data),
            "model": model,
            "name": dataset_name,
            "out": str(output),
            "trace": str(trace_path) if trace_path else None,
        },
    )
    try:
        report = EvaluateModelUseCase().execute(
            list(checkpoints),
            data,
            ModelKind(model) if model else None,
            dataset_name,
            trace_path,
        )
        write_reports([report], output)
    except (PMPError, FileNotFoundError) as e:
        _fail(ctx, e)

    table = Table(title=report.get_summary(), header_style="bold magenta")
    for column in ("Seed", "Query acc", "Bit acc", "μ P/R", "φ P/R", "Final N", "Empty"):
        table.add_column(column)
    for m in report.seeds:
        table.add_row(
            str(m.seed),
            f"{m.query_accuracy:.3f}",
            f"{m.bit_accuracy:.3f}",
            f"{m.relevance_precision:.2f}/{m.relevance_recall:.2f}",
            f"{m.persistency_precision:.2f}/{m.persistency_recall:.2f}",
            f"{m.mean_final_nodes:.1f}",
            str(m.empty_readouts),
        )
    console.print(table)


def _display_comparison(table_data: ComparisonTable) -> None:
    table = Table(title="Query accuracy (all bits correct)", header_style="bold magenta")
    table.add_column("Dataset", style="cyan")
    table.add_column("Model", style="green")
    table.add_column("Mean ± std", style="yellow")
    table.add_column("Seeds")
    for row in table_data.rows:
        table.add_row(row.dataset, row.model.value, f"{row.mean:.3f} ± {row.std:.3f}", str(row.seeds))
    console.print(table)
    for check, holds in table_data.orderings.items():
        mark = "[green]✓[/green]" if holds else "[red]✗[/red]"
        console.print(f"{mark} {check}")


@cli.command("compare")
@click.option("--reports", "report_paths", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              multiple=True, required=True, help="Evaluation report files; repeatable")
@click.option("--out", "output", type=click.Path(dir_okay=False, path_type=Path),
              help="Write the comparison table as JSON")
@click.option("--strict", is_flag=True, help="Exit nonzero when an expected ordering fails")
@click.pass_context
def compare(ctx: click.Context, report_paths: Tuple[Path, ...], output: Optional[Path], strict: bool) -> None:
    """Mean ± std per model and dataset, with the expected orderings checked."""
    _print_effective_config(
        "compare", {"reports": [str(p) for p in report_paths], "out": str(output) if output else None}
    )
    try:
        reports: List[EvalReport] = []
        for path in report_paths:
            reports.extend(read_reports(path))
        table = compare_reports(reports)
    except (PMPError, FileNotFoundError) as e:
        _fail(ctx, e)

    _display_comparison(table)
    if output:
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(table.model_dump_json(indent=2), encoding="utf-8")
    if strict and not all(table.orderings.values()):
        sys.exit(1)


# Entry point for the CLI
def main() -> None:
    """Main entry point for the CLI application."""
    try:
        cli()
    except KeyboardInterrupt:
        console.print("\n[yellow]Operation cancelled by user[/yellow]")
        sys.exit(1)
    except PMPError as e:
        console.print(f"[red]Error:[/red] {escape(str(e))}")
        sys.exit(1)


if __name__ == "__main__":
    main()
