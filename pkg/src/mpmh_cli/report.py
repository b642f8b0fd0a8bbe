from collections.abc import Sequence
from typing import Optional

import pandas as pd
from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from .config import Scenario
from .sim import METRICS, MetricsReport, StaticResult

console = Console()

PLOT_METRICS = {
    "avg_delay": "plot_avg_delay.csv",
    "throughput": "plot_throughput.csv",
    "flow_delay": "plot_flow_delay.csv",
    "flow_throughput": "plot_flow_throughput.csv",
}


def print_header(title: str, scenario: Scenario) -> None:
    """Render the command header and scenario identity."""
    console.print()
    console.print(
        Panel.fit(
            f"[bold cyan]📡 {title}[/bold cyan]\n[dim]{scenario.name} · {scenario.topology.n} nodes · "
            f"{len(scenario.flows)} flows · digest {scenario.digest}[/dim]",
            border_style="cyan",
        )
    )
    console.print()


def _fmt(value: Optional[float], digits: int = 3) -> str:
    return "n/a" if value is None or pd.isna(value) else f"{value:.{digits}f}"


def static_summary(result: StaticResult, scenario: Scenario) -> str:
    """Plain-text summary of a single-frame evaluation (stable across re-runs)."""
    lines = [
        f"scenario: {scenario.name} ({scenario.digest})",
        f"scheduler: {result.scheduler}",
        f"pairings: {result.schedule.k}",
        f"total slots: {result.schedule.total_slots}",
        f"demand: {result.demand} packets",
        f"delivered: {result.delivered} packets",
    ]
    lines.append("paths:")
    for ps in result.path_sets:
        shares = ", ".join(f"{path.label} ({share})" for path, share in zip(ps.paths, ps.split))
        lines.append(f"  flow {ps.flow_id}: {shares}")
    if result.schedule.unschedulable:
        lines.append("unschedulable flows: " + ", ".join(map(str, result.schedule.unschedulable)))
    if result.oracle_status is not None:
        optimal = result.oracle_slots
        lines.append(f"optimal: {optimal if optimal is not None else 'n/a'} slots ({result.oracle_status})")
        if optimal is not None:
            gap = result.schedule.total_slots - optimal
            lines.append(f"gap: {result.schedule.total_slots} heuristic vs {optimal} optimal (+{gap} slots)")
    if result.joint_split is not None:
        splits = "; ".join(f"flow {fid} {split}" for fid, split in sorted(result.joint_split.items()))
        lines.append(f"joint split: {splits} -> {result.joint_slots} slots")
    lines.append("validation: " + ("ok" if not result.violations else f"{len(result.violations)} violation(s)"))
    lines.extend(f"  - {v}" for v in result.violations)
    return "\n".join(lines) + "\n"


def print_static(result: StaticResult) -> None:
    table = Table(title="🗓️  Frame Schedule", box=box.ROUNDED)
    table.add_column("#", justify="right", style="dim")
    table.add_column("δ", justify="right", style="bold")
    table.add_column("Links", style="cyan")
    for index, pairing in enumerate(result.schedule.pairings, start=1):
        table.add_row(str(index), str(pairing.delta), "  ".join(map(str, pairing.hops)))
    console.print(table)
    console.print()

    lines = [f"Total slots: [bold]{result.schedule.total_slots}[/bold]"]
    if result.oracle_slots is not None:
        lines.append(
            f"Optimal: [bold]{result.oracle_slots}[/bold] ([cyan]{result.schedule.total_slots} heuristic vs "
            f"{result.oracle_slots} optimal[/cyan])"
        )
    if result.joint_slots is not None:
        lines.append(f"Joint split optimum: [bold]{result.joint_slots}[/bold]")
    lines.append(f"Delivered: {result.delivered}/{result.demand} packets")
    lines.append(f"[dim]Scheduling took {result.compute_seconds * 1000:.2f} ms[/dim]")
    ok = not result.violations
    style = "green" if ok else "red"
    status = "✨ Schedule valid" if ok else f"❌ {len(result.violations)} constraint violation(s)"
    console.print(Panel(f"[bold {style}]{status}[/bold {style}]\n\n" + "\n".join(lines), border_style=style))
    for violation in result.violations[:10]:
        console.print(f"   [red]✗[/red] {violation}")


def run_summary(reports: Sequence[MetricsReport], scenario: Scenario) -> str:
    lines = [f"scenario: {scenario.name} ({scenario.digest})", f"tracked flows: {sorted(scenario.tracked_flows)}"]
    for r in reports:
        lines.append(
            f"{r.scheduler} seed {r.seed}: throughput {r.throughput}/{r.arrivals}, avg delay {_fmt(r.avg_delay)}, "
            f"flow throughput {r.flow_throughput}, flow delay {_fmt(r.flow_delay)}, dropped {r.dropped}, "
            f"queued {r.queued}, frames {r.frames}, fairness {_fmt(r.fairness)}"
        )
    return "\n".join(lines) + "\n"


def print_runs(reports: Sequence[MetricsReport]) -> None:
    table = Table(title="📊 Run Metrics", box=box.ROUNDED)
    for column, justify in [
        ("Scheduler", "left"),
        ("Seed", "right"),
        ("Throughput", "right"),
        ("Avg delay", "right"),
        ("Flow thr.", "right"),
        ("Flow delay", "right"),
        ("Dropped", "right"),
        ("Frames", "right"),
        ("Compute (s)", "right"),
    ]:
        table.add_column(column, justify=justify)  # type: ignore[arg-type]
    for r in reports:
        table.add_row(
            r.scheduler,
            str(r.seed),
            f"[green]{r.throughput}[/green]",
            _fmt(r.avg_delay, 1),
            str(r.flow_throughput),
            _fmt(r.flow_delay, 1),
            f"[red]{r.dropped}[/red]" if r.dropped else "0",
            str(r.frames),
            f"[dim]{r.compute_seconds:.2f}[/dim]",
        )
    console.print(table)


def plot_frames(runs: pd.DataFrame) -> dict[str, pd.DataFrame]:
    """One table per plotted metric: rows by load, one column per scheduler (or per H_max)."""
    series = "h_max" if "h_max" in runs.columns and runs["h_max"].notna().any() else "scheduler"
    frames = {}
    for metric, filename in PLOT_METRICS.items():
        table = runs.pivot_table(index="load", columns=series, values=metric, aggfunc="mean", dropna=False)
        table.columns = [f"{series}={c}" if series == "h_max" else str(c) for c in table.columns]
        frames[filename] = table.reset_index()
    return frames


def sweep_summary(aggregate: pd.DataFrame, failures: pd.DataFrame) -> str:
    lines = [f"cells: {len(aggregate)} aggregated, {len(failures)} failed"]
    for row in aggregate.itertuples(index=False):
        data = row._asdict()
        key = f"{data['scheduler']} load {data['load']:g}"
        if "h_max" in data:
            key += f" h_max {data['h_max']}"
        lines.append(
            f"{key}: throughput {_fmt(data['throughput_mean'], 1)}, avg delay {_fmt(data['avg_delay_mean'], 1)}, "
            f"flow delay {_fmt(data['flow_delay_mean'], 1)}"
        )
    for row in failures.itertuples(index=False):
        lines.append(f"FAILED {row.scheduler} load {row.load:g} seed {row.seed}: {row.error}")
    return "\n".join(lines) + "\n"


def print_sweep(aggregate: pd.DataFrame, failures: pd.DataFrame) -> None:
    table = Table(title="📈 Sweep Aggregate (mean ± std over seeds)", box=box.ROUNDED)
    keys = ["scheduler", "load", *(["h_max"] if "h_max" in aggregate.columns else [])]
    for key in keys:
        table.add_column(key, justify="left" if key == "scheduler" else "right")
    shown = [m for m in METRICS if m in ("throughput", "avg_delay", "flow_delay", "flow_throughput")]
    for metric in shown:
        table.add_column(metric, justify="right")
    for row in aggregate.to_dict("records"):
        cells = [str(row[k]) if k == "scheduler" else f"{row[k]:g}" for k in keys]
        cells += [f"{_fmt(row[f'{m}_mean'], 1)} ± {_fmt(row[f'{m}_std'], 1)}" for m in shown]
        table.add_row(*cells)
    console.print(table)
    if len(failures):
        console.print(f"\n[bold red]❌ {len(failures)} cell(s) failed[/bold red] (see failures.csv)")
