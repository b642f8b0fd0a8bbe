"""Single-hop comparison schedulers: FDMAC and its uniform-rate variant."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from enum import Enum
from fractions import Fraction

from .errors import SchedulingError
from .mpmh import Pairing, Schedule, ScheduledHop
from .network import Flow, Path, PathSet, Topology, direct_rate
from .radio import RadioModel, Rate, pairing_feasible

logger = logging.getLogger(__name__)

# 1 Gbps under the 2 Gbps = 1 packet/slot mapping
UNIFORM_RATE: Rate = Fraction(1, 2)


class BaselineKind(str, Enum):
    FDMAC = "fdmac"
    FDMAC_UR = "fdmac-ur"


def direct_path_sets(flows: Sequence[Flow], topology: Topology) -> tuple[list[PathSet], list[int]]:
    """Direct-link path sets for flows with demand, plus the ids of blocked ones."""
    path_sets: list[PathSet] = []
    blocked: list[int] = []
    for flow in flows:
        if flow.demand_pkts <= 0:
            continue
        rate = direct_rate(topology, flow)
        if rate == 0:
            blocked.append(flow.id)
            continue
        path_sets.append(PathSet(flow.id, (Path((flow.direct,), (rate,)),), (flow.demand_pkts,)))
    return path_sets, blocked


def schedule_fdmac(flows: Sequence[Flow], topology: Topology, radio: RadioModel) -> Schedule:
    """Greedy pairings over flows sorted once by non-increasing demand."""
    path_sets, blocked = direct_path_sets(flows, topology)
    for flow_id in blocked:
        logger.warning("Flow %d has a blocked direct link and no relay under FDMAC", flow_id)
    pending = sorted(
        (ScheduledHop(ps.flow_id, 0, 0, ps.paths[0].hops[0], ps.paths[0].rates[0], ps.split[0]) for ps in path_sets),
        key=lambda hop: (-hop.packets, hop.flow_id),
    )
    for hop in pending:
        if not pairing_feasible(radio, [topology.radio_link(hop.link, hop.rate)]):
            raise SchedulingError(f"hop {hop} misses its SINR threshold even when transmitting alone", hop)

    max_links = max(1, topology.n // 2)
    pairings: list[Pairing] = []
    while pending:
        members: list[ScheduledHop] = []
        busy: set[str] = set()
        for hop in pending:
            if len(members) == max_links:
                break
            if busy & set(hop.link):
                continue
            trial = [*members, hop]
            if not pairing_feasible(radio, [topology.radio_link(h.link, h.rate) for h in trial]):
                continue
            members = trial
            busy.update(hop.link)
        pairings.append(Pairing(tuple(members), max(h.weight for h in members)))
        pending = [hop for hop in pending if hop not in members]
    return Schedule(tuple(pairings), tuple(blocked))


def uniform_instance(topology: Topology, radio: RadioModel, rate: Rate = UNIFORM_RATE) -> tuple[Topology, RadioModel]:
    return topology.uniform_copy(rate), radio.with_uniform_rate(rate)


def schedule_fdmac_ur(
    flows: Sequence[Flow], topology: Topology, radio: RadioModel, rate: Rate = UNIFORM_RATE
) -> Schedule:
    """FDMAC with every link's rate differences ignored."""
    return schedule_fdmac(flows, *uniform_instance(topology, radio, rate))
