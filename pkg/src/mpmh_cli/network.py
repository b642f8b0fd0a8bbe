"""Topology, directional links, flows and paths."""

from __future__ import annotations

import math
import string
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import NamedTuple, Optional, Protocol

import numpy as np

from .errors import ConfigurationError, TopologyError
from .radio import Point, RadioLink, RadioModel, Rate

DEFAULT_RATE_ALPHABET: tuple[int, ...] = (1, 2, 3, 4)
DEFAULT_EMA_ALPHA = 0.1


class Node(NamedTuple):
    id: str
    x: float
    y: float
    is_pnc: bool = False

    @property
    def position(self) -> Point:
        return self.x, self.y


class Link(NamedTuple):
    sender: str
    receiver: str

    def __str__(self) -> str:
        return f"{self.sender}->{self.receiver}"


def adjacent(link_a: Link, link_b: Link) -> bool:
    """Two links are adjacent when they share an endpoint."""
    return bool({link_a.sender, link_a.receiver} & {link_b.sender, link_b.receiver})


def is_matching(links: Iterable[Link]) -> bool:
    """True when no two links share an endpoint."""
    seen: set[str] = set()
    for link in links:
        if link.sender in seen or link.receiver in seen or link.sender == link.receiver:
            return False
        seen.update(link)
    return True


@dataclass(frozen=True)
class Topology:
    nodes: tuple[Node, ...]
    link_rate: Mapping[Link, Rate] = field(default_factory=dict)
    rate_alphabet: tuple[Rate, ...] = DEFAULT_RATE_ALPHABET

    def __post_init__(self):
        ids = [node.id for node in self.nodes]
        if len(set(ids)) != len(ids):
            raise TopologyError("node ids must be unique")
        if sum(node.is_pnc for node in self.nodes) != 1:
            raise TopologyError("exactly one node must be the PNC")
        positions = [node.position for node in self.nodes]
        if len(set(positions)) != len(positions):
            raise TopologyError("node positions must be pairwise distinct")
        known = set(ids)
        rates = {}
        for (sender, receiver), rate in self.link_rate.items():
            if sender not in known or receiver not in known:
                raise TopologyError(f"link {sender}->{receiver} references an unknown node")
            if sender == receiver:
                raise TopologyError(f"self-link on {sender}")
            if rate != 0 and rate not in self.rate_alphabet:
                raise ConfigurationError(
                    f"rate {rate} on {sender}->{receiver} is outside the alphabet {list(self.rate_alphabet)}"
                )
            rates[Link(sender, receiver)] = rate
        object.__setattr__(self, "link_rate", rates)
        object.__setattr__(self, "_by_id", {node.id: node for node in self.nodes})

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def pnc(self) -> Node:
        return next(node for node in self.nodes if node.is_pnc)

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(node.id for node in self.nodes)

    def node(self, node_id: str) -> Node:
        try:
            return self._by_id[node_id]  # type: ignore[attr-defined]
        except KeyError:
            raise TopologyError(f"unknown node {node_id!r}") from None

    def position(self, node_id: str) -> Point:
        return self.node(node_id).position

    def distance(self, a: str, b: str) -> float:
        return math.dist(self.position(a), self.position(b))

    def rate(self, sender: str, receiver: str) -> Rate:
        return self.link_rate.get(Link(sender, receiver), 0)

    def links(self) -> Iterator[Link]:
        """Unblocked links in deterministic order."""
        return iter(sorted(link for link, rate in self.link_rate.items() if rate > 0))

    def neighbors(self, node_id: str) -> list[tuple[str, Rate]]:
        return [(link.receiver, self.link_rate[link]) for link in self.links() if link.sender == node_id]

    def radio_link(self, link: Link, rate: Optional[Rate] = None) -> RadioLink:
        return RadioLink(
            link.sender,
            link.receiver,
            self.position(link.sender),
            self.position(link.receiver),
            self.rate(*link) if rate is None else rate,
        )

    def with_blocked(self, links: Iterable[Link]) -> Topology:
        rates = dict(self.link_rate)
        for link in links:
            unknown = [node for node in link if node not in self.node_ids]
            if unknown:
                raise TopologyError(f"blocked link {link.sender}->{link.receiver} names unknown node {unknown[0]!r}")
            rates[Link(*link)] = 0
        return replace(self, link_rate=rates)

    def uniform_copy(self, rate: Rate) -> Topology:
        """Every unblocked link set to `rate`; blocked links stay blocked."""
        rates = {link: (rate if value > 0 else 0) for link, value in self.link_rate.items()}
        return replace(self, link_rate=rates, rate_alphabet=(rate,))


class RateQuantizer(Protocol):
    rates: tuple[Rate, ...]

    def __call__(self, model: RadioModel, dist_m: float) -> Rate: ...


@dataclass(frozen=True)
class DistanceQuantizer:
    """Rate buckets by distance: the i-th edge admits the i-th rate."""

    edges_m: tuple[float, ...]
    rates: tuple[Rate, ...]

    def __post_init__(self):
        if len(self.edges_m) != len(self.rates) or not self.edges_m:
            raise ConfigurationError("quantizer needs one rate per distance edge")
        if any(b <= a for a, b in zip(self.edges_m, self.edges_m[1:])):
            raise ConfigurationError("quantizer edges must be strictly increasing")

    @classmethod
    def for_arena(cls, side_m: float, rates: tuple[Rate, ...] = (4, 3, 2, 1)) -> DistanceQuantizer:
        diagonal = side_m * math.sqrt(2)
        count = len(rates)
        return cls(tuple(diagonal * (i + 1) / count for i in range(count)), tuple(rates))

    def __call__(self, model: RadioModel, dist_m: float) -> Rate:
        for edge, rate in zip(self.edges_m, self.rates):
            if dist_m <= edge * (1 + 1e-9):
                return rate
        return 0


@dataclass(frozen=True)
class SnrQuantizer:
    """Highest table rate whose MS(c) the single-link SNR reaches."""

    rates: tuple[Rate, ...] = ()

    def __call__(self, model: RadioModel, dist_m: float) -> Rate:
        snr = model.snr(dist_m)
        best: Rate = 0
        for threshold, rate in model.rate_table:
            if snr >= threshold:
                best = rate
        return best


def rate_from_distance(model: RadioModel, topology: Topology, quantizer: RateQuantizer) -> Topology:
    """Fill a rate for every ordered node pair from its distance."""
    rates = {}
    for a, b in combinations(topology.node_ids, 2):
        rate = quantizer(model, topology.distance(a, b))
        rates[Link(a, b)] = rate
        rates[Link(b, a)] = rate
    alphabet = tuple(sorted(quantizer.rates or model.rates))
    return replace(topology, link_rate=rates, rate_alphabet=alphabet)


def node_names(count: int) -> list[str]:
    if count <= len(string.ascii_uppercase):
        return list(string.ascii_uppercase[:count])
    return [f"n{i:02d}" for i in range(count)]


def generate_topology(node_count: int, arena_m: float, seed: int) -> Topology:
    """Uniform placement in a square arena; the first node is the PNC."""
    if node_count < 2:
        raise TopologyError("a WPAN needs at least two nodes")
    if arena_m <= 0:
        raise TopologyError("arena size must be positive")
    rng = np.random.default_rng(seed)
    while True:
        points = rng.uniform(0.0, arena_m, size=(node_count, 2))
        if len({(float(x), float(y)) for x, y in points}) == node_count:
            break
    names = node_names(node_count)
    nodes = tuple(Node(name, float(x), float(y), i == 0) for i, (name, (x, y)) in enumerate(zip(names, points)))
    return Topology(nodes)


@dataclass(frozen=True)
class Flow:
    id: int
    src: str
    dst: str
    demand_pkts: int = 0
    demand_intensity: float = 0.0

    def __post_init__(self):
        if self.src == self.dst:
            raise TopologyError(f"flow {self.id}: source and destination must differ")
        if self.demand_pkts < 0 or self.demand_intensity < 0:
            raise ValueError(f"flow {self.id}: demand must be non-negative")

    @property
    def direct(self) -> Link:
        return Link(self.src, self.dst)


def direct_rate(topology: Topology, flow: Flow) -> Rate:
    """c_v, the rate of the flow's direct link (0 when blocked)."""
    return topology.rate(flow.src, flow.dst)


def demand_intensity_update(flow: Flow, arrivals_this_frame: int, frame_slots: int, alpha: float = DEFAULT_EMA_ALPHA) -> float:
    """Exponential moving average of the per-slot arrival rate."""
    if frame_slots <= 0:
        raise ValueError("frame_slots must be positive")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must be in (0, 1]")
    return (1 - alpha) * flow.demand_intensity + alpha * (arrivals_this_frame / frame_slots)


@dataclass(frozen=True)
class Path:
    hops: tuple[Link, ...]
    rates: tuple[Rate, ...]

    def __post_init__(self):
        if not self.hops or len(self.hops) != len(self.rates):
            raise TopologyError("a path needs one rate per hop and at least one hop")
        for prev, nxt in zip(self.hops, self.hops[1:]):
            if prev.receiver != nxt.sender:
                raise TopologyError(f"hops {prev} and {nxt} do not chain")
        nodes = self.nodes
        if len(set(nodes)) != len(nodes):
            raise TopologyError(f"path {'-'.join(nodes)} has a loop")
        if any(rate <= 0 for rate in self.rates):
            raise TopologyError(f"path {'-'.join(nodes)} uses a blocked hop")

    @classmethod
    def from_nodes(cls, topology: Topology, nodes: Iterable[str]) -> Path:
        seq = list(nodes)
        hops = tuple(Link(a, b) for a, b in zip(seq, seq[1:]))
        return cls(hops, tuple(topology.rate(*hop) for hop in hops))

    @property
    def nodes(self) -> tuple[str, ...]:
        return (self.hops[0].sender, *(hop.receiver for hop in self.hops))

    @property
    def hop_count(self) -> int:
        return len(self.hops)

    @property
    def bottleneck_rate(self) -> Rate:
        return min(self.rates)

    @property
    def bottleneck_index(self) -> int:
        # earliest hop wins a tie
        return self.rates.index(self.bottleneck_rate)

    @property
    def bottleneck_hop(self) -> Link:
        return self.hops[self.bottleneck_index]

    @property
    def first(self) -> str:
        return self.hops[0].sender

    @property
    def last(self) -> str:
        return self.hops[-1].receiver

    @property
    def label(self) -> str:
        return "-".join(self.nodes)


@dataclass(frozen=True)
class PathSet:
    """Selected paths of one flow with the per-path demand split."""

    flow_id: int
    paths: tuple[Path, ...]
    split: tuple[int, ...]

    def __post_init__(self):
        if len(self.paths) != len(self.split):
            raise ValueError("one split entry per path is required")
        if any(d < 0 for d in self.split):
            raise ValueError("path demand must be non-negative")
        for a, b in combinations(self.paths, 2):
            shared = set(a.hops) & set(b.hops)
            if shared:
                raise TopologyError(f"paths {a.label} and {b.label} share hop {min(shared)}")

    @property
    def demand(self) -> int:
        return sum(self.split)

    def check(self, demand_pkts: int, n: int) -> None:
        if self.demand != demand_pkts:
            raise ValueError(f"flow {self.flow_id}: split {self.split} does not add up to {demand_pkts}")
        if len(self.paths) > n // 2:
            raise ValueError(f"flow {self.flow_id}: {len(self.paths)} paths exceed floor(n/2) = {n // 2}")

    def without_empty(self) -> PathSet:
        kept = [(p, d) for p, d in zip(self.paths, self.split) if d > 0]
        return PathSet(self.flow_id, tuple(p for p, _ in kept), tuple(d for _, d in kept))

    def with_split(self, split: Iterable[int]) -> PathSet:
        return replace(self, split=tuple(split))
