"""Frame-based discrete-time engine: poll, schedule, push, transmit, account."""

from __future__ import annotations

import logging
import math
import time
from collections import deque
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import TYPE_CHECKING, NamedTuple, Optional

import numpy as np
import pandas as pd

from .baseline import direct_path_sets, schedule_fdmac, schedule_fdmac_ur, uniform_instance
from .errors import AccountingError, ConfigurationError, MpmhError, SimulationError
from .milp import METHODS, SolveBudget, SolveStatus, build_p1, solution_to_schedule, solve_exact, split_search
from .mpmh import PathCache, Schedule, plan_frame, truncate_schedule, validate_schedule
from .network import Flow, PathSet, demand_intensity_update
from .traffic import ArrivalStream, generate, read_replay

if TYPE_CHECKING:
    from .config import Scenario

logger = logging.getLogger(__name__)

SCHEDULERS = ("mpmh", "fdmac", "fdmac-ur", "oracle")
RUN_COLUMNS = [
    "scheduler",
    "load",
    "seed",
    "avg_delay",
    "throughput",
    "flow_delay",
    "flow_throughput",
    "frames",
    "mean_frame_slots",
    "fairness",
]
METRICS = ["avg_delay", "throughput", "flow_delay", "flow_throughput", "frames", "mean_frame_slots", "fairness"]


@dataclass(frozen=True)
class SimParams:
    length_slots: int = 50_000
    delay_threshold_slots: int = 25_000
    poll_slots: int = 1
    sched_slots: int = 2
    push_slots: int = 1
    ema_alpha: float = 0.1

    def __post_init__(self):
        if self.length_slots < 1:
            raise ConfigurationError("sim.length_slots must be >= 1")
        if self.delay_threshold_slots < 0:
            raise ConfigurationError("sim.delay_threshold_slots must be >= 0")
        if min(self.poll_slots, self.sched_slots, self.push_slots) < 0:
            raise ConfigurationError("overhead slots must be >= 0")
        if not 0 < self.ema_alpha <= 1:
            raise ConfigurationError("sim.ema_alpha must be in (0, 1]")


@dataclass(frozen=True)
class OracleParams:
    max_hops: int = 8
    method: str = "auto"
    node_limit: int = 20_000
    time_limit_s: float = 60.0
    split_granularity: int = 1

    def __post_init__(self):
        if self.max_hops < 1:
            raise ConfigurationError("oracle.max_hops must be >= 1")
        if self.method not in METHODS:
            raise ConfigurationError(f"oracle.method must be one of {', '.join(METHODS)}")
        if self.node_limit < 1 or self.time_limit_s <= 0:
            raise ConfigurationError("oracle budget must be positive")
        if self.split_granularity < 1:
            raise ConfigurationError("oracle.split_granularity must be >= 1")

    @property
    def budget(self) -> SolveBudget:
        return SolveBudget(self.node_limit, self.time_limit_s)


@dataclass
class FrameClock:
    poll_slots: int = 1
    sched_slots: int = 2
    push_slots: int = 1
    current_slot: int = 0
    frames: int = 0

    @property
    def overhead(self) -> int:
        return self.poll_slots + self.sched_slots + self.push_slots

    def begin_frame(self) -> int:
        """Poll at the current slot; returns the slot the transmission phase starts."""
        self.frames += 1
        return self.current_slot + self.overhead

    def finish_frame(self, transmission_slots: int) -> int:
        length = max(1, self.overhead + transmission_slots)
        self.current_slot += length
        return length


class PacketRecord(NamedTuple):
    flow_id: int
    arrival_slot: int
    delivery_slot: Optional[int]
    dropped: bool = False

    @property
    def delay(self) -> Optional[int]:
        return None if self.delivery_slot is None else self.delivery_slot - self.arrival_slot


@dataclass(frozen=True)
class MetricsReport:
    scheduler: str
    load: Optional[float]
    seed: int
    avg_delay: Optional[float]
    throughput: int
    flow_delay: Optional[float]
    flow_throughput: int
    frames: int
    mean_frame_slots: float
    fairness: Optional[float]
    arrivals: int = 0
    dropped: int = 0
    queued: int = 0
    frame_slots: tuple[int, ...] = ()
    compute_seconds: float = 0.0

    def row(self) -> dict:
        return {column: getattr(self, column) for column in RUN_COLUMNS}


@dataclass
class AccountingResult:
    records: list[PacketRecord] = field(default_factory=list)
    requeued: dict[int, list[int]] = field(default_factory=dict)

    @property
    def delivered(self) -> list[PacketRecord]:
        return [r for r in self.records if not r.dropped]

    @property
    def dropped(self) -> list[PacketRecord]:
        return [r for r in self.records if r.dropped]


def _hop_positions(schedule: Schedule) -> dict[tuple[int, int, int], int]:
    return {(hop.flow_id, hop.path_index, hop.hop_index): index for index, hop in schedule.hops()}


def multi_hop_delivery_accounting(
    schedule: Schedule,
    path_sets: Sequence[PathSet],
    queues: Mapping[int, deque],
    start_slot: int,
    delay_threshold: int,
    complete: bool = True,
) -> AccountingResult:
    """Move packets hop by hop through the executed pairings.

    The head of each flow's queue is partitioned over its paths by the
    split. Packets left on a path when the schedule ends go back to the
    queue head with their original arrival slot. With `complete` set, the
    schedule must carry every assigned packet.
    """
    positions = _hop_positions(schedule)
    buffers: dict[tuple[int, int], list[list[int]]] = {}
    for ps in path_sets:
        queue = queues[ps.flow_id]
        if ps.demand > len(queue):
            raise AccountingError(f"flow {ps.flow_id}: split {ps.split} exceeds its {len(queue)} queued packets")
        for index, (path, share) in enumerate(zip(ps.paths, ps.split)):
            if share == 0:
                continue
            slots = [positions.get((ps.flow_id, index, i)) for i in range(path.hop_count)]
            placed = [s for s in slots if s is not None]
            out_of_order = any(b <= a for a, b in zip(placed, placed[1:]))
            if out_of_order or slots[: len(placed)] != placed:
                raise AccountingError(f"flow {ps.flow_id} path {index}: hops are not scheduled in path order")
            stages: list[list[int]] = [[] for _ in range(path.hop_count)]
            stages[0] = [queue.popleft() for _ in range(share)]
            buffers[(ps.flow_id, index)] = stages

    result = AccountingResult()
    slot = start_slot
    for pairing in schedule.pairings:
        end = slot + pairing.delta
        for hop in pairing.hops:
            stages = buffers.get((hop.flow_id, hop.path_index))
            if stages is None:
                raise AccountingError(f"{hop} carries traffic that was never assigned to its path")
            capacity = math.floor(Fraction(pairing.delta) * Fraction(hop.rate))
            waiting = stages[hop.hop_index]
            if complete and len(waiting) < hop.packets:
                raise AccountingError(f"{hop} expected {hop.packets} packets but only {len(waiting)} reached it")
            if complete and capacity < len(waiting):
                raise AccountingError(f"{hop} can carry {capacity} packets but holds {len(waiting)}")
            moved, stages[hop.hop_index] = waiting[:capacity], waiting[capacity:]
            if hop.hop_index + 1 < len(stages):
                stages[hop.hop_index + 1].extend(moved)
                continue
            for arrival in moved:
                dropped = end - arrival > delay_threshold
                result.records.append(PacketRecord(hop.flow_id, arrival, None if dropped else end, dropped))
        slot = end

    for (flow_id, _), stages in buffers.items():
        stranded = [arrival for stage in stages for arrival in stage]
        if stranded:
            result.requeued.setdefault(flow_id, []).extend(stranded)
    for flow_id, stranded in result.requeued.items():
        stranded.sort()
        queues[flow_id].extendleft(reversed(stranded))
    return result


class FrameScheduler:
    """Per-run scheduler adapter: flows with current demands in, schedule and path sets out."""

    def __init__(self, name: str, scenario: Scenario):
        if name not in SCHEDULERS:
            raise ConfigurationError(f"scheduler must be one of {', '.join(SCHEDULERS)}")
        self.name = name
        self.scenario = scenario
        self.cache: PathCache = {}
        self._warned_oracle = False

    def __call__(self, flows: Sequence[Flow]) -> tuple[Schedule, tuple[PathSet, ...]]:
        sc = self.scenario
        if self.name == "fdmac":
            return schedule_fdmac(flows, sc.topology, sc.radio), tuple(direct_path_sets(flows, sc.topology)[0])
        if self.name == "fdmac-ur":
            topology, _ = uniform_instance(sc.topology, sc.radio)
            return schedule_fdmac_ur(flows, sc.topology, sc.radio), tuple(direct_path_sets(flows, topology)[0])
        plan = plan_frame(flows, sc.topology, sc.radio, sc.mpmh, self.cache)
        if self.name == "mpmh" or not plan.schedule.pairings:
            return plan.schedule, plan.path_sets
        return self._oracle(plan.schedule, plan.path_sets), plan.path_sets

    def fit(self, flows: Sequence[Flow], cap: int) -> tuple[Schedule, tuple[PathSet, ...]]:
        """Schedule the largest proportional share of the backlog that fits in `cap` slots.

        Demand left out stays queued for the next frame instead of being
        relayed part of the way and sent back to the source.
        """
        schedule, path_sets = self(flows)
        while schedule.total_slots > cap:
            scale = Fraction(cap, schedule.total_slots)
            # floor keeps every nonzero demand strictly shrinking
            flows = [replace(f, demand_pkts=math.floor(f.demand_pkts * scale)) for f in flows]
            logger.debug("frame needs %d slots; demand scaled by %s", schedule.total_slots, scale)
            schedule, path_sets = self(flows)
        return schedule, path_sets

    def _oracle(self, heuristic: Schedule, path_sets: tuple[PathSet, ...]) -> Schedule:
        sc = self.scenario
        hops = sum(1 for _ in heuristic.hops())
        if hops > sc.oracle.max_hops:
            if not self._warned_oracle:
                logger.warning(
                    "Oracle skipped: %d hops exceed oracle.max_hops = %d; using the heuristic schedule",
                    hops,
                    sc.oracle.max_hops,
                )
                self._warned_oracle = True
            return heuristic
        instance = build_p1(path_sets, sc.topology, sc.radio)
        solution = solve_exact(instance, sc.oracle.budget, sc.oracle.method, incumbent=heuristic)
        if solution.objective is None or solution.objective > heuristic.total_slots:
            return heuristic
        if solution.status is not SolveStatus.OPTIMAL:
            logger.debug("oracle returned its incumbent (%s)", solution.status.value)
        return replace(solution_to_schedule(instance, solution), unschedulable=heuristic.unschedulable)


def jain_fairness(values: Iterable[float]) -> Optional[float]:
    data = np.asarray(list(values), dtype=float)
    if len(data) == 0 or not data.any():
        return None
    return float(data.sum() ** 2 / (len(data) * (data**2).sum()))


def _arrivals_for(scenario: Scenario, seed: int) -> ArrivalStream:
    flow_count = len(scenario.flows)
    if scenario.replay is not None:
        return read_replay(scenario.replay, flow_count, scenario.sim.length_slots)
    if scenario.traffic is None:
        raise ConfigurationError("scenario has no traffic section; evaluate it as a static single frame")
    return generate(scenario.traffic, flow_count, scenario.sim.length_slots, seed)


def run(scenario: Scenario, scheduler: str, seed: int) -> MetricsReport:
    """Simulate `scenario.sim.length_slots` slots of frames under one scheduler."""
    params = scenario.sim
    stream = _arrivals_for(scenario, seed)
    flows = list(scenario.nominal_flows())
    slots = [stream.slots(i) for i in range(len(flows))]
    cursor = [0] * len(flows)
    queues: dict[int, deque] = {flow.id: deque() for flow in flows}
    frame_scheduler = FrameScheduler(scheduler, scenario)
    clock = FrameClock(params.poll_slots, params.sched_slots, params.push_slots)

    records: list[PacketRecord] = []
    frame_slots: list[int] = []
    compute = 0.0
    previous_frame: Optional[int] = None

    while clock.current_slot < params.length_slots:
        frame_start = clock.current_slot
        tx_start = clock.begin_frame()
        try:
            for i, flow in enumerate(flows):
                arrived = int(np.searchsorted(slots[i], frame_start, side="right"))
                fresh = slots[i][cursor[i] : arrived]
                cursor[i] = arrived
                queue = queues[flow.id]
                queue.extend(int(s) for s in fresh)
                while queue and frame_start - queue[0] > params.delay_threshold_slots:
                    records.append(PacketRecord(flow.id, queue.popleft(), None, True))
                intensity = flow.demand_intensity
                if previous_frame is not None:
                    intensity = demand_intensity_update(flow, len(fresh), previous_frame, params.ema_alpha)
                flows[i] = replace(flow, demand_pkts=len(queue), demand_intensity=intensity)

            started = time.perf_counter()
            schedule, path_sets = frame_scheduler.fit(flows, scenario.mpmh.frame_slot_cap)
            compute += time.perf_counter() - started

            executed = truncate_schedule(schedule, scenario.mpmh.frame_slot_cap) if schedule.pairings else schedule
            kept, used = [], 0
            for pairing in executed.pairings:
                if tx_start + used + pairing.delta > params.length_slots:
                    break
                kept.append(pairing)
                used += pairing.delta
            complete = len(kept) == len(schedule.pairings) and executed.total_slots == schedule.total_slots
            executed = replace(executed, pairings=tuple(kept))
            outcome = multi_hop_delivery_accounting(
                executed, path_sets, queues, tx_start, params.delay_threshold_slots, complete
            )
        except MpmhError as exc:
            if isinstance(exc, AccountingError):
                raise
            raise SimulationError(clock.frames, exc) from exc
        records.extend(outcome.records)
        frame_slots.append(executed.total_slots)
        previous_frame = clock.finish_frame(executed.total_slots)

    return _report(scenario, scheduler, seed, flows, stream, records, queues, cursor, frame_slots, compute)


def _report(
    scenario: Scenario,
    scheduler: str,
    seed: int,
    flows: Sequence[Flow],
    stream: ArrivalStream,
    records: Sequence[PacketRecord],
    queues: Mapping[int, deque],
    cursor: Sequence[int],
    frame_slots: Sequence[int],
    compute: float,
) -> MetricsReport:
    delivered = [r for r in records if not r.dropped]
    dropped = [r for r in records if r.dropped]
    for i, flow in enumerate(flows):
        arrivals = len(stream.times[i])
        pending = arrivals - cursor[i]
        done = sum(1 for r in records if r.flow_id == flow.id)
        if arrivals != done + len(queues[flow.id]) + pending:
            raise AccountingError(
                f"flow {flow.id}: {arrivals} arrivals but {done} finished, "
                f"{len(queues[flow.id])} queued, {pending} not yet polled"
            )
    tracked = scenario.tracked_flows
    tracked_delivered = [r for r in delivered if r.flow_id in tracked]
    per_flow = [sum(1 for r in delivered if r.flow_id == flow.id) for flow in flows]
    return MetricsReport(
        scheduler=scheduler,
        load=scenario.traffic.load if scenario.traffic else None,
        seed=seed,
        avg_delay=float(np.mean([r.delay for r in delivered])) if delivered else None,
        throughput=len(delivered),
        flow_delay=float(np.mean([r.delay for r in tracked_delivered])) if tracked_delivered else None,
        flow_throughput=len(tracked_delivered),
        frames=len(frame_slots),
        mean_frame_slots=float(np.mean(frame_slots)) if frame_slots else 0.0,
        fairness=jain_fairness(per_flow),
        arrivals=stream.total(),
        dropped=len(dropped),
        queued=sum(len(q) for q in queues.values()) + sum(len(stream.times[i]) - cursor[i] for i in range(len(flows))),
        frame_slots=tuple(frame_slots),
        compute_seconds=compute,
    )


@dataclass(frozen=True)
class StaticResult:
    """One frame of a static-demand scenario."""

    scheduler: str
    schedule: Schedule
    path_sets: tuple[PathSet, ...]
    violations: tuple[str, ...]
    delivered: int
    demand: int
    compute_seconds: float
    oracle_slots: Optional[int] = None
    oracle_status: Optional[str] = None
    oracle_schedule: Optional[Schedule] = None
    joint_split: Optional[dict[int, tuple[int, ...]]] = None
    joint_slots: Optional[int] = None


def frame_demand_flows(scenario: Scenario) -> tuple[Flow, ...]:
    """One frame's worth of nominal arrivals per flow, for checking a dynamic scenario's schedules."""
    if scenario.static:
        return scenario.nominal_flows(static=True)
    return tuple(
        replace(f, demand_pkts=math.ceil(f.demand_intensity * scenario.mpmh.frame_slot_cap))
        for f in scenario.nominal_flows()
    )


def evaluate_static(
    scenario: Scenario,
    scheduler: str,
    oracle: bool = False,
    validate_only: bool = False,
    flows: Optional[Sequence[Flow]] = None,
) -> StaticResult:
    """Schedule the configured demands once, validate, optionally compare against the exact optimum."""
    flows = list(flows if flows is not None else scenario.nominal_flows(static=True))
    frame_scheduler = FrameScheduler(scheduler, scenario)
    started = time.perf_counter()
    schedule, path_sets = frame_scheduler(flows)
    compute = time.perf_counter() - started

    topology, radio = scenario.topology, scenario.radio
    if scheduler == "fdmac-ur":
        topology, radio = uniform_instance(topology, radio)
    violations = tuple(validate_schedule(schedule, path_sets, topology, radio))

    delivered = 0
    demand = sum(f.demand_pkts for f in flows)
    if not validate_only and not violations:
        queues = {f.id: deque([0] * f.demand_pkts) for f in flows}
        outcome = multi_hop_delivery_accounting(schedule, path_sets, queues, 0, scenario.sim.delay_threshold_slots)
        delivered = len(outcome.delivered)

    result = StaticResult(scheduler, schedule, path_sets, violations, delivered, demand, compute)
    if not oracle or scheduler in ("fdmac", "fdmac-ur") or not path_sets:
        return result
    hops = sum(1 for _ in schedule.hops())
    if hops > scenario.oracle.max_hops:
        logger.warning("Oracle skipped: %d hops exceed oracle.max_hops = %d", hops, scenario.oracle.max_hops)
        return result
    instance = build_p1(path_sets, topology, radio)
    solution = solve_exact(instance, scenario.oracle.budget, scenario.oracle.method)
    joint = split_search(
        path_sets, topology, radio, granularity=scenario.oracle.split_granularity, budget=scenario.oracle.budget
    )
    return replace(
        result,
        oracle_slots=solution.objective,
        oracle_status=solution.status.value,
        oracle_schedule=solution_to_schedule(instance, solution) if solution.objective is not None else None,
        joint_split={ps.flow_id: ps.split for ps in joint.path_sets},
        joint_slots=joint.solution.objective,
    )


class SweepCell(NamedTuple):
    scheduler: str
    load: float
    seed: int
    h_max: Optional[int] = None


def _run_cell(scenario: Scenario, cell: SweepCell) -> dict:
    cell_scenario = scenario.with_load(cell.load)
    if cell.h_max is not None:
        cell_scenario = cell_scenario.with_h_max(cell.h_max)
    try:
        report = run(cell_scenario, cell.scheduler, cell.seed)
    except MpmhError as exc:
        return {**cell._asdict(), "error": str(exc)}
    return {**report.row(), "h_max": cell.h_max, "compute_seconds": report.compute_seconds}


@dataclass(frozen=True)
class SweepResult:
    runs: pd.DataFrame
    failures: pd.DataFrame

    @property
    def aggregate(self) -> pd.DataFrame:
        return aggregate(self.runs)


def sweep(
    scenario: Scenario,
    loads: Sequence[float],
    schedulers: Sequence[str],
    seeds: Sequence[int],
    h_max_values: Optional[Sequence[int]] = None,
    workers: int = 1,
) -> SweepResult:
    """Every (scheduler, load, seed[, h_max]) cell; failed cells are recorded and skipped."""
    if not loads or not schedulers or not seeds:
        raise ConfigurationError("sweep needs at least one load, scheduler and seed")
    unknown = sorted(set(schedulers) - set(SCHEDULERS))
    if unknown:
        raise ConfigurationError(f"unknown scheduler(s): {', '.join(unknown)}")
    cells = [
        SweepCell(s, float(load), int(seed), h)
        for h in (h_max_values or [None])
        for load in loads
        for s in schedulers
        for seed in seeds
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, [scenario] * len(cells), cells))
    else:
        rows = [_run_cell(scenario, cell) for cell in cells]

    failures = [row for row in rows if "error" in row]
    for row in failures:
        logger.warning("Sweep cell %s/%s/seed %s failed: %s", row["scheduler"], row["load"], row["seed"], row["error"])
    columns = [*RUN_COLUMNS, *(["h_max"] if h_max_values else [])]
    runs = pd.DataFrame([row for row in rows if "error" not in row], columns=[*columns, "compute_seconds"])
    # undefined delays and fairness come back as None
    runs = runs.astype({"avg_delay": float, "flow_delay": float, "fairness": float})
    return SweepResult(runs, pd.DataFrame(failures, columns=[*SweepCell._fields, "error"]))


def aggregate(runs: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard deviation across seeds per (scheduler, load[, h_max])."""
    keys = ["scheduler", "load", *(["h_max"] if "h_max" in runs.columns else [])]
    grouped = runs.groupby(keys, sort=True)[METRICS].agg(["mean", "std"])
    grouped.columns = [f"{metric}_{stat}" for metric, stat in grouped.columns]
    return grouped.reset_index()

