"""Console script for mpmh_cli."""

import json
from pathlib import Path
from typing import Annotated, Optional

import pandas as pd
import typer
from rich.panel import Panel

from .config import SCENARIO_DIR, example_scenario, validate_and_load
from .errors import MpmhError
from .mpmh import format_schedule
from .report import (
    console,
    plot_frames,
    print_header,
    print_runs,
    print_static,
    print_sweep,
    run_summary,
    static_summary,
    sweep_summary,
)
from .sim import RUN_COLUMNS, SCHEDULERS, evaluate_static, frame_demand_flows, run, sweep
from .utils import (
    DEFAULT_OUTPUT_ROOT,
    configure_logging,
    output_directory,
    parse_ints,
    parse_loads,
    parse_names,
    write_csv,
    write_json,
)

app = typer.Typer(
    name="mpmh",
    help="📡 MPMH - multi-path multi-hop scheduling for mmWave WPANs.",
    add_completion=False,
    no_args_is_help=True,
)

ScenarioOption = Annotated[
    str,
    typer.Option(
        "--scenario",
        "-s",
        help="Scenario file, built-in name (fig1b, ten-node, single-flow) or scenarios/NAME.json",
    ),
]
OutOption = Annotated[
    str,
    typer.Option(
        "--out",
        "-o",
        envvar="MPMH_OUTPUT_ROOT",
        help="Output root; one sub-directory per scenario content hash",
    ),
]
VerboseOption = Annotated[
    bool,
    typer.Option(
        "--verbose",
        "-v",
        help="Debug logging",
    ),
]


def _fail(error: Exception) -> typer.Exit:
    console.print(f"\n[bold red]❌ Error:[/bold red] {error}")
    return typer.Exit(1)


@app.command(name="run")
def run_command(
    scenario: ScenarioOption = "fig1b",
    scheduler: Annotated[
        Optional[str],
        typer.Option(
            "--scheduler",
            help=f"One of {', '.join(SCHEDULERS)} (default: the scenario's)",
        ),
    ] = None,
    seeds: Annotated[
        Optional[int],
        typer.Option(
            "--seeds",
            help="Number of seeds for dynamic scenarios (seeds 0..N-1)",
            min=1,
        ),
    ] = None,
    oracle: Annotated[
        bool,
        typer.Option(
            "--oracle",
            help="Also solve the frame exactly and report the heuristic/optimal gap",
        ),
    ] = False,
    validate_only: Annotated[
        bool,
        typer.Option(
            "--validate-only",
            help="Check one frame's schedule against the constraints without simulating",
        ),
    ] = False,
    out: OutOption = DEFAULT_OUTPUT_ROOT,
    verbose: VerboseOption = False,
):
    """
    ▶️ Schedule one frame (static scenarios) or simulate (dynamic scenarios).

    Examples:

      # Worked example with the exact optimum alongside
      mpmh run -s fig1b --oracle

      # Same frame with the single-hop baseline
      mpmh run -s fig1b --scheduler fdmac

      # Ten-node network, three seeds
      mpmh run -s ten-node --seeds 3
    """
    configure_logging(verbose)
    try:
        loaded = validate_and_load(scenario)
        if scheduler is not None:
            loaded = loaded.with_scheduler(scheduler)
        print_header("MPMH run", loaded)
        target = output_directory(out, loaded.name, loaded.digest)
        write_json(loaded.resolved, target / "scenario.resolved.json")

        if loaded.static or validate_only:
            flows = None if loaded.static else frame_demand_flows(loaded)
            result = evaluate_static(loaded, loaded.scheduler, oracle, validate_only, flows)
            (target / "schedule.txt").write_text(format_schedule(result.schedule))
            if result.oracle_schedule is not None:
                (target / "oracle_schedule.txt").write_text(format_schedule(result.oracle_schedule))
            (target / "summary.txt").write_text(static_summary(result, loaded))
            print_static(result)
            console.print(f"\n[dim]Artifacts in {target}[/dim]")
            if result.violations:
                raise typer.Exit(1)
            return

        reports, failures = [], []
        for seed in range(seeds or loaded.seeds):
            try:
                reports.append(run(loaded, loaded.scheduler, seed))
            except MpmhError as e:
                failures.append({"scheduler": loaded.scheduler, "seed": seed, "error": str(e)})
                console.print(f"[red]✗[/red] seed {seed}: {e}")
        write_csv(pd.DataFrame([r.row() for r in reports], columns=RUN_COLUMNS), target / "runs.csv")
        (target / "summary.txt").write_text(run_summary(reports, loaded))
        if failures:
            write_csv(pd.DataFrame(failures), target / "failures.csv")
        print_runs(reports)
        console.print(f"\n[dim]Artifacts in {target}[/dim]")
        if failures:
            console.print(f"[bold red]❌ {len(failures)} run(s) failed[/bold red] (see failures.csv)")
            raise typer.Exit(1)
    except (MpmhError, ValueError, FileNotFoundError) as e:
        raise _fail(e)  # noqa: B904


@app.command(name="sweep")
def sweep_command(
    scenario: ScenarioOption = "ten-node",
    loads: Annotated[
        str,
        typer.Option(
            "--loads",
            help="Loads as START..STOP (step 1) or a comma list",
        ),
    ] = "1..10",
    schedulers: Annotated[
        str,
        typer.Option(
            "--schedulers",
            help="Comma-separated schedulers",
        ),
    ] = "mpmh,fdmac,fdmac-ur",
    seeds: Annotated[
        Optional[int],
        typer.Option(
            "--seeds",
            help="Seeds per cell (default: the scenario's sim.seeds)",
            min=1,
        ),
    ] = None,
    h_max: Annotated[
        Optional[str],
        typer.Option(
            "--h-max",
            help="Hop-limit values to sweep, e.g. 2,3,4",
        ),
    ] = None,
    workers: Annotated[
        int,
        typer.Option(
            "--workers",
            "-w",
            help="Parallel worker processes",
            min=1,
        ),
    ] = 1,
    out: OutOption = DEFAULT_OUTPUT_ROOT,
    verbose: VerboseOption = False,
):
    """
    📈 Run every (scheduler, load, seed) cell and write plot-ready CSVs.

    Examples:

      # Protocol comparison over loads 1..10
      mpmh sweep -s ten-node --seeds 10

      # Hop-limit study
      mpmh sweep -s ten-node --schedulers mpmh --h-max 2,3,4
    """
    configure_logging(verbose)
    try:
        loaded = validate_and_load(scenario)
        if loaded.static:
            raise ValueError(f"scenario '{loaded.name}' has static demands; sweep needs a traffic section")
        load_values = parse_loads(loads)
        names = parse_names(schedulers)
        h_values = parse_ints(h_max) if h_max else None
        print_header("MPMH sweep", loaded)
        result = sweep(loaded, load_values, names, list(range(seeds or loaded.seeds)), h_values, workers)

        target = output_directory(out, loaded.name, loaded.digest)
        write_json(loaded.resolved, target / "scenario.resolved.json")
        if result.runs.empty:
            write_csv(result.failures, target / "failures.csv")
            raise ValueError(f"all {len(result.failures)} sweep cells failed (see {target / 'failures.csv'})")
        runs = result.runs.drop(columns=["compute_seconds"])
        aggregated = result.aggregate
        write_csv(runs, target / "runs.csv")
        write_csv(aggregated, target / "aggregate.csv")
        for filename, frame in plot_frames(runs).items():
            write_csv(frame, target / filename)
        (target / "summary.txt").write_text(sweep_summary(aggregated, result.failures))
        if len(result.failures):
            write_csv(result.failures, target / "failures.csv")
        print_sweep(aggregated, result.failures)
        console.print(
            f"\n[dim]{len(result.runs)} runs in {result.runs['compute_seconds'].sum():.1f} s of scheduling; "
            f"artifacts in {target}[/dim]"
        )
        if len(result.failures):
            raise typer.Exit(1)
    except (MpmhError, ValueError, FileNotFoundError) as e:
        raise _fail(e)  # noqa: B904


@app.command()
def init(
    directory: Annotated[
        str,
        typer.Argument(
            help="Directory to initialize (default: current)",
        ),
    ] = ".",
):
    """
    📝 Create an example scenarios/example.json.
    """
    scenario_path = Path(directory) / SCENARIO_DIR / "example.json"
    if not scenario_path.exists():
        scenario_path.parent.mkdir(parents=True, exist_ok=True)
        scenario_path.write_text(json.dumps(example_scenario(), indent=2) + "\n")
        console.print(f"[green]✓[/green] Created [bold]{scenario_path}[/bold]")
    else:
        console.print(f"[yellow]⚠️[/yellow]  {scenario_path} already exists")

    console.print()
    console.print(
        Panel(
            "[bold green]✨ Initialization complete![/bold green]\n\n"
            "Edit the scenario to customize:\n"
            f"  • [cyan]{scenario_path}[/cyan] - topology, flows, traffic and protocol parameters\n\n"
            "[dim]Run 'mpmh run -s example' to simulate it.[/dim]",
            border_style="green",
        )
    )


@app.callback(invoke_without_command=True)
def default_callback(ctx: typer.Context):
    """
    Default behavior when no command is specified.
    """
    if ctx.invoked_subcommand is None:
        console.print(ctx.get_help())


if __name__ == "__main__":
    app()
