"""Multi-path multi-hop scheduling: flow selection, path selection, traffic split and pairings."""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping, MutableMapping, Sequence
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import NamedTuple, Optional

from .errors import ConfigurationError, ScheduleViolation, SchedulingError
from .network import Flow, Link, Path, PathSet, Topology, direct_rate, is_matching
from .radio import RadioModel, Rate, pairing_feasible

logger = logging.getLogger(__name__)

SEED_RULES = ("closest", "largest")
PathCache = MutableMapping[tuple[bool, int], tuple[Path, ...]]


@dataclass(frozen=True)
class MpmhParams:
    epsilon: float = 0.0625
    h_max: int = 3
    frame_slot_cap: int = 1000
    seed_rule: str = "closest"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigurationError("epsilon must be > 0")
        if self.h_max < 1:
            raise ConfigurationError("h_max must be >= 1")
        if self.frame_slot_cap < 1:
            raise ConfigurationError("frame_slot_cap must be >= 1")
        if self.seed_rule not in SEED_RULES:
            raise ConfigurationError(f"seed_rule must be one of {', '.join(SEED_RULES)}")


def hop_weight(packets: int, rate: Rate) -> int:
    """Slots a hop needs to carry `packets` at `rate` packets/slot."""
    return math.ceil(Fraction(packets) / Fraction(rate))


class ScheduledHop(NamedTuple):
    flow_id: int
    path_index: int
    hop_index: int
    link: Link
    rate: Rate
    packets: int

    @property
    def weight(self) -> int:
        return hop_weight(self.packets, self.rate)

    @property
    def path_key(self) -> tuple[int, int]:
        return self.flow_id, self.path_index

    def __str__(self) -> str:
        return f"{self.link}@{self.flow_id}/{self.path_index}"


@dataclass(frozen=True)
class Pairing:
    hops: tuple[ScheduledHop, ...]
    delta: int

    @property
    def links(self) -> tuple[Link, ...]:
        return tuple(hop.link for hop in self.hops)


@dataclass(frozen=True)
class Schedule:
    pairings: tuple[Pairing, ...] = ()
    unschedulable: tuple[int, ...] = ()

    @property
    def total_slots(self) -> int:
        return sum(p.delta for p in self.pairings)

    @property
    def k(self) -> int:
        return len(self.pairings)

    def hops(self) -> Iterable[tuple[int, ScheduledHop]]:
        for index, pairing in enumerate(self.pairings):
            for hop in pairing.hops:
                yield index, hop


def select_mpmh_flows(flows: Sequence[Flow], topology: Topology, epsilon: float) -> frozenset[int]:
    """Flows whose direct rate is small relative to their demand intensity.

    A flow qualifies when its direct link is blocked, or when its ratio
    c_v / D̄_v falls below `epsilon` times the average ratio over flows
    with a usable direct link and nonzero intensity.
    """
    blocked = {f.id for f in flows if direct_rate(topology, f) == 0 and f.demand_intensity > 0}
    ratios = {
        f.id: float(direct_rate(topology, f)) / f.demand_intensity
        for f in flows
        if direct_rate(topology, f) > 0 and f.demand_intensity > 0
    }
    if not ratios:
        if flows:
            logger.warning("No flow has both a usable direct link and nonzero demand; multi-path selection is empty")
        return frozenset(blocked)
    average = sum(ratios.values()) / len(ratios)
    chosen = {fid for fid, ratio in ratios.items() if ratio / average < epsilon}
    return frozenset(blocked | chosen)


def _candidate_paths(topology: Topology, flow: Flow, h_max: int) -> list[Path]:
    c_v = direct_rate(topology, flow)
    completed: list[tuple[str, ...]] = []
    frontier: list[tuple[str, ...]] = [(flow.src,)]
    for _ in range(h_max):
        extended = []
        for seq in frontier:
            for node, rate in topology.neighbors(seq[-1]):
                if rate <= 0 or rate < c_v or node in seq:
                    continue
                if node == flow.dst:
                    completed.append((*seq, node))
                else:
                    extended.append((*seq, node))
        frontier = extended
    return [Path.from_nodes(topology, seq) for seq in completed]


def select_paths(topology: Topology, flow: Flow, h_max: int) -> list[Path]:
    """Hop-disjoint relay paths, at most floor(n/2), ordered by (hops, node sequence)."""
    if h_max < 1:
        raise ConfigurationError("h_max must be >= 1")
    candidates = sorted(
        _candidate_paths(topology, flow, h_max),
        key=lambda p: (-p.bottleneck_rate, p.hop_count, p.nodes),
    )
    limit = max(1, topology.n // 2)
    selected: list[Path] = []
    used_hops: set[Link] = set()
    bottlenecks: list[Link] = []
    for path in candidates:
        if len(selected) >= limit:
            break
        if used_hops.intersection(path.hops):
            continue
        neck = path.bottleneck_hop
        if any({neck.sender, neck.receiver} & {b.sender, b.receiver} for b in bottlenecks):
            continue
        selected.append(path)
        used_hops.update(path.hops)
        bottlenecks.append(neck)
    return sorted(selected, key=lambda p: (p.hop_count, p.nodes))


def distribute_traffic(paths: Sequence[Path], demand_pkts: int) -> tuple[int, ...]:
    """Largest-remainder split proportional to bottleneck rates.

    Ties on the remainder go to the lower path index.
    """
    if not paths:
        raise ValueError("at least one path is required")
    if demand_pkts < 0:
        raise ValueError("demand must be non-negative")
    weights = [Fraction(p.bottleneck_rate) for p in paths]
    total = sum(weights)
    quotas = [demand_pkts * w / total for w in weights]
    split = [math.floor(q) for q in quotas]
    leftover = demand_pkts - sum(split)
    order = sorted(range(len(paths)), key=lambda i: (-(quotas[i] - split[i]), i))
    for i in order[:leftover]:
        split[i] += 1
    return tuple(split)


def scheduled_hops(path_sets: Iterable[PathSet]) -> dict[tuple[int, int], list[ScheduledHop]]:
    """Hops keyed by (flow id, path index); paths with a zero split carry nothing and are left out."""
    per_path: dict[tuple[int, int], list[ScheduledHop]] = {}
    for ps in path_sets:
        for index, (path, packets) in enumerate(zip(ps.paths, ps.split)):
            if packets <= 0:
                continue
            per_path[(ps.flow_id, index)] = [
                ScheduledHop(ps.flow_id, index, i, hop, rate, packets)
                for i, (hop, rate) in enumerate(zip(path.hops, path.rates))
            ]
    return per_path


def _check_alone(hop: ScheduledHop, topology: Topology, radio: RadioModel) -> None:
    if not pairing_feasible(radio, [topology.radio_link(hop.link, hop.rate)]):
        raise SchedulingError(f"hop {hop} misses its SINR threshold even when transmitting alone", hop)


def schedule_transmissions(
    path_sets: Sequence[PathSet],
    topology: Topology,
    radio: RadioModel,
    params: Optional[MpmhParams] = None,
) -> Schedule:
    """Pack hops into concurrent pairings.

    Each pairing repeatedly visits the unvisited path with the most
    unscheduled hops, offering its next hop; among equal paths the hop
    whose weight is closest to the pairing's current duration goes first
    (larger weight, then path id, on ties). A visited path is not offered
    again within the same pairing whether or not its hop got in.
    """
    params = params or MpmhParams()
    per_path = scheduled_hops(path_sets)
    for hops in per_path.values():
        for hop in hops:
            _check_alone(hop, topology, radio)

    cursor = dict.fromkeys(per_path, 0)
    max_links = max(1, topology.n // 2)
    pairings: list[Pairing] = []

    while any(cursor[key] < len(hops) for key, hops in per_path.items()):
        delta = 0
        members: list[ScheduledHop] = []
        busy: set[str] = set()
        visited: set[tuple[int, int]] = set()
        while len(members) < max_links:
            pending = [k for k in per_path if k not in visited and cursor[k] < len(per_path[k])]
            if not pending:
                break
            most = max(len(per_path[k]) - cursor[k] for k in pending)
            top = [k for k in pending if len(per_path[k]) - cursor[k] == most]

            def rank(key: tuple[int, int], current: int = delta) -> tuple:
                weight = per_path[key][cursor[key]].weight
                if current == 0 and params.seed_rule == "largest":
                    return -weight, key
                return abs(current - weight), -weight, key

            key = min(top, key=rank)
            visited.add(key)
            hop = per_path[key][cursor[key]]
            if busy & {hop.link.sender, hop.link.receiver}:
                continue
            trial = [*members, hop]
            if not pairing_feasible(radio, [topology.radio_link(h.link, h.rate) for h in trial]):
                continue
            members = trial
            busy.update(hop.link)
            delta = max(delta, hop.weight)
            cursor[key] += 1
        if not members:
            raise SchedulingError("no hop could be admitted into a fresh pairing")
        logger.debug("pairing %d: delta=%d %s", len(pairings) + 1, delta, " ".join(map(str, members)))
        pairings.append(Pairing(tuple(members), delta))
    return Schedule(tuple(pairings))


def validate_schedule(
    schedule: Schedule,
    path_sets: Sequence[PathSet],
    topology: Topology,
    radio: RadioModel,
) -> list[str]:
    """Every violated scheduling constraint, as readable strings."""
    violations: list[str] = []
    expected = scheduled_hops(path_sets)
    expected_hops = {(h.flow_id, h.path_index, h.hop_index): h for hops in expected.values() for h in hops}
    placed: dict[tuple[int, int, int], list[int]] = {}
    max_links = max(1, topology.n // 2)

    for index, pairing in enumerate(schedule.pairings):
        if not pairing.hops:
            violations.append(f"pairing {index}: empty")
        if pairing.delta < 0:
            violations.append(f"pairing {index}: negative duration {pairing.delta}")
        if not is_matching(pairing.links):
            violations.append(f"pairing {index}: links share a node")
        if len(pairing.hops) > max_links:
            violations.append(f"pairing {index}: {len(pairing.hops)} links exceed floor(n/2) = {max_links}")
        for hop in pairing.hops:
            hop_id = (hop.flow_id, hop.path_index, hop.hop_index)
            placed.setdefault(hop_id, []).append(index)
            want = expected_hops.get(hop_id)
            if want is None:
                violations.append(f"pairing {index}: {hop} is not part of any path")
                continue
            if (want.link, want.rate, want.packets) != (hop.link, hop.rate, hop.packets):
                violations.append(f"pairing {index}: {hop} disagrees with its path")
            if pairing.delta < hop.weight:
                violations.append(f"pairing {index}: duration {pairing.delta} below weight {hop.weight} of {hop}")
        try:
            feasible = pairing_feasible(radio, [topology.radio_link(h.link, h.rate) for h in pairing.hops])
        except ConfigurationError as exc:
            violations.append(f"pairing {index}: {exc}")
        else:
            if not feasible:
                violations.append(f"pairing {index}: SINR threshold missed")

    for hop_id, hop in expected_hops.items():
        where = placed.get(hop_id, [])
        if len(where) != 1:
            violations.append(f"{hop} scheduled {len(where)} times")
    for hops in expected.values():
        slots = [placed.get((h.flow_id, h.path_index, h.hop_index), [None])[0] for h in hops]
        if None in slots:
            continue
        for earlier, later, hop in zip(slots, slots[1:], hops[1:]):
            if later <= earlier:
                violations.append(f"{hop} is not scheduled after the previous hop of its path")
    return violations


def assert_valid_schedule(
    schedule: Schedule,
    path_sets: Sequence[PathSet],
    topology: Topology,
    radio: RadioModel,
) -> None:
    violations = validate_schedule(schedule, path_sets, topology, radio)
    if violations:
        raise ScheduleViolation(violations)


def truncate_schedule(schedule: Schedule, cap: int) -> Schedule:
    """Longest pairing prefix that fits in `cap` slots.

    A first pairing longer than the cap is kept with its duration clipped.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    kept: list[Pairing] = []
    used = 0
    for pairing in schedule.pairings:
        if used + pairing.delta > cap:
            if not kept:
                kept.append(replace(pairing, delta=cap))
            break
        kept.append(pairing)
        used += pairing.delta
    return replace(schedule, pairings=tuple(kept))


def format_schedule(schedule: Schedule) -> str:
    lines = [" ".join([str(p.delta), *map(str, p.hops)]) for p in schedule.pairings]
    if schedule.unschedulable:
        lines.append("unschedulable " + " ".join(map(str, schedule.unschedulable)))
    return "\n".join(lines) + "\n" if lines else ""


@dataclass(frozen=True)
class FramePlan:
    selected: frozenset[int]
    path_sets: tuple[PathSet, ...]
    schedule: Schedule
    paths: Mapping[int, tuple[Path, ...]] = field(default_factory=dict)


def flow_paths(
    flow: Flow,
    topology: Topology,
    params: MpmhParams,
    multi_path: bool,
    cache: Optional[PathCache] = None,
) -> tuple[Path, ...]:
    """Paths a flow may use this frame; empty when it cannot be served at all."""
    if cache is not None and (multi_path, flow.id) in cache:
        return cache[(multi_path, flow.id)]
    c_v = direct_rate(topology, flow)
    paths: tuple[Path, ...] = ()
    if multi_path:
        paths = tuple(select_paths(topology, flow, params.h_max))
    if not paths and c_v > 0:
        paths = (Path((flow.direct,), (c_v,)),)
    if cache is not None:
        cache[(multi_path, flow.id)] = paths
    return paths


def plan_frame(
    flows: Sequence[Flow],
    topology: Topology,
    radio: RadioModel,
    params: Optional[MpmhParams] = None,
    path_cache: Optional[PathCache] = None,
) -> FramePlan:
    """Selection, path choice, split and schedule for one frame's demands."""
    params = params or MpmhParams()
    selected = select_mpmh_flows(flows, topology, params.epsilon)
    path_sets: list[PathSet] = []
    unschedulable: list[int] = []
    chosen: dict[int, tuple[Path, ...]] = {}
    for flow in flows:
        if flow.demand_pkts <= 0:
            continue
        multi_path = flow.id in selected or direct_rate(topology, flow) == 0
        paths = flow_paths(flow, topology, params, multi_path, path_cache)
        if not paths:
            logger.warning("Flow %d (%s->%s) has no usable path this frame", flow.id, flow.src, flow.dst)
            unschedulable.append(flow.id)
            continue
        chosen[flow.id] = paths
        split = distribute_traffic(paths, flow.demand_pkts)
        path_sets.append(PathSet(flow.id, paths, split))
    schedule = schedule_transmissions(path_sets, topology, radio, params)
    schedule = replace(schedule, unschedulable=tuple(unschedulable))
    return FramePlan(selected, tuple(path_sets), schedule, chosen)
