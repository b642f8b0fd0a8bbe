"""Path loss, SINR and the concurrent-transmission test.

All quantities are linear (mW, W/Hz, ratios); decibels only appear at the
config boundary through :func:`db_to_linear` / :func:`linear_to_db`.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Union

from .errors import ConfigurationError, TopologyError

Point = tuple[float, float]
Rate = Union[int, Fraction]


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(value)


@dataclass(frozen=True)
class AdjacencyOnly:
    """Non-adjacent links never interfere (the evaluation assumption)."""


@dataclass(frozen=True)
class SectorBeam:
    """Ideal flat-top sector antenna of the given full beamwidth."""

    beamwidth_rad: float

    def __post_init__(self):
        if not 0 < self.beamwidth_rad <= 2 * math.pi:
            raise ConfigurationError(f"beamwidth must be in (0, 2π], got {self.beamwidth_rad}")


BeamPolicy = Union[AdjacencyOnly, SectorBeam]


def default_rate_table(rates: int = 4, first_db: float = 10.0, step_db: float = 6.0) -> tuple[tuple[float, int], ...]:
    """MS(c) rows for rates 1..`rates`, thresholds `step_db` apart starting at `first_db`."""
    return tuple((db_to_linear(first_db + step_db * i), i + 1) for i in range(rates))


@dataclass(frozen=True)
class PhyTiming:
    """Per-packet timing constants of the simulated PHY, in nanoseconds.

    Kept for documentation and reports; the packets-per-slot mapping does
    not subtract them.
    """

    slot_ns: float = 5000.0
    propagation_ns: float = 50.0
    phy_overhead_ns: float = 250.0
    sifs_ns: float = 100.0
    packet_bytes: int = 1000

    def short_frame_ns(self, rate_gbps: float) -> float:
        return self.phy_overhead_ns + 14 * 8 / rate_gbps + self.propagation_ns

    def packet_ns(self, rate_gbps: float) -> float:
        return self.packet_bytes * 8 / rate_gbps

    def ack_ns(self, rate_gbps: float) -> float:
        return self.short_frame_ns(rate_gbps)


@dataclass(frozen=True)
class RadioModel:
    """Immutable link-budget parameters; safe to share between runs."""

    tx_power_mw: float = 1000.0
    ref_loss_db: float = -68.0
    path_loss_exp: float = 2.0
    mui_factor: float = 1.0
    bandwidth_hz: float = 2.16e9
    noise_psd_mw_per_hz: float = db_to_linear(-174.0)
    rate_table: tuple[tuple[float, Rate], ...] = field(default_factory=default_rate_table)
    beam_policy: BeamPolicy = AdjacencyOnly()

    def __post_init__(self):
        if self.tx_power_mw <= 0:
            raise ConfigurationError("tx_power_mw must be > 0")
        if self.path_loss_exp <= 0:
            raise ConfigurationError("path_loss_exp must be > 0")
        if self.bandwidth_hz <= 0:
            raise ConfigurationError("bandwidth_hz must be > 0")
        if self.noise_psd_mw_per_hz <= 0:
            raise ConfigurationError("noise_psd_mw_per_hz must be > 0")
        if not 0.0 <= self.mui_factor <= 1.0:
            raise ConfigurationError("mui_factor must be in [0, 1]")
        table = tuple((float(sinr), rate) for sinr, rate in self.rate_table)
        if not table:
            raise ConfigurationError("rate_table must not be empty")
        for (prev_sinr, prev_rate), (sinr, rate) in zip(table, table[1:]):
            if not (sinr > prev_sinr and rate > prev_rate):
                raise ConfigurationError("rate_table must be strictly increasing in both SINR and rate")
        object.__setattr__(self, "rate_table", table)

    @property
    def k0(self) -> float:
        return db_to_linear(self.ref_loss_db)

    @property
    def noise_mw(self) -> float:
        return self.bandwidth_hz * self.noise_psd_mw_per_hz

    @property
    def rates(self) -> tuple[Rate, ...]:
        return tuple(rate for _, rate in self.rate_table)

    def min_sinr(self, rate: Rate) -> float:
        """MS(c): the minimum linear SINR that sustains `rate`."""
        for sinr, table_rate in self.rate_table:
            if table_rate == rate:
                return sinr
        raise ConfigurationError(f"rate {rate} is not in the MS(c) table {list(self.rates)}")

    def snr(self, dist_m: float) -> float:
        return received_power(self, dist_m) / self.noise_mw

    def with_uniform_rate(self, rate: Rate) -> RadioModel:
        """Copy whose table also knows `rate`, 6 dB below the lowest row."""
        if rate in self.rates:
            return self
        lowest_sinr, lowest_rate = self.rate_table[0]
        if rate >= lowest_rate:
            raise ConfigurationError(f"uniform rate {rate} must be below the lowest table rate {lowest_rate}")
        row = (lowest_sinr / db_to_linear(6.0), rate)
        return replace(self, rate_table=(row, *self.rate_table))


@dataclass(frozen=True)
class RadioLink:
    """A directed link with the geometry needed by the SINR model."""

    sender: str
    receiver: str
    tx: Point
    rx: Point
    rate: Rate

    @property
    def length(self) -> float:
        return math.dist(self.tx, self.rx)

    @property
    def nodes(self) -> tuple[str, str]:
        return self.sender, self.receiver


@dataclass(frozen=True)
class BeamState:
    """Active beam direction (unit vector) per node; absent or None means idle."""

    positions: Mapping[str, Point]
    directions: Mapping[str, Optional[Point]]

    @classmethod
    def for_links(cls, links: Iterable[RadioLink]) -> BeamState:
        """Both endpoints of every link steer towards each other."""
        positions: dict[str, Point] = {}
        directions: dict[str, Optional[Point]] = {}
        for link in links:
            positions[link.sender] = link.tx
            positions[link.receiver] = link.rx
            directions[link.sender] = _unit(link.tx, link.rx)
            directions[link.receiver] = _unit(link.rx, link.tx)
        return cls(positions, directions)

    def direction(self, node: str) -> Optional[Point]:
        return self.directions.get(node)


def _unit(origin: Point, target: Point) -> Point:
    dx, dy = target[0] - origin[0], target[1] - origin[1]
    norm = math.hypot(dx, dy)
    if norm == 0:
        raise TopologyError("co-located nodes have no line of sight")
    return dx / norm, dy / norm


def _within(direction: Point, line_of_sight: Point, half_width: float) -> bool:
    cos_angle = direction[0] * line_of_sight[0] + direction[1] * line_of_sight[1]
    return math.acos(max(-1.0, min(1.0, cos_angle))) <= half_width + 1e-12


def received_power(model: RadioModel, dist_m: float) -> float:
    """k0 · Pt · d^-γ in mW."""
    if dist_m <= 0:
        raise TopologyError(f"distance must be positive, got {dist_m}")
    return model.k0 * model.tx_power_mw * dist_m ** (-model.path_loss_exp)


def beam_indicator(policy: BeamPolicy, sender: str, receiver: str, beams: BeamState) -> int:
    """f(s_i, r_j): 1 when the two nodes point their beams at each other."""
    if sender == receiver:
        return 1
    if isinstance(policy, AdjacencyOnly):
        return 0
    tx_beam = beams.direction(sender)
    rx_beam = beams.direction(receiver)
    if tx_beam is None or rx_beam is None:
        return 0
    los = _unit(beams.positions[sender], beams.positions[receiver])
    back = (-los[0], -los[1])
    half = policy.beamwidth_rad / 2
    return int(_within(tx_beam, los, half) and _within(rx_beam, back, half))


def interference_gain(model: RadioModel, interferer: RadioLink, victim: RadioLink, beams: BeamState) -> float:
    """f · k0 · Pt · l^-γ received at the victim's receiver from the interferer's sender."""
    if beam_indicator(model.beam_policy, interferer.sender, victim.receiver, beams) == 0:
        return 0.0
    return received_power(model, math.dist(interferer.tx, victim.rx))


def sinr(
    model: RadioModel,
    victim: RadioLink,
    active_links: Iterable[RadioLink],
    beams: Optional[BeamState] = None,
) -> float:
    """SINR at the victim's receiver with every other active link transmitting."""
    active = list(active_links)
    if victim not in active:
        raise ValueError("victim link must be one of the active links")
    if beams is None:
        beams = BeamState.for_links(active)
    interference = sum(interference_gain(model, link, victim, beams) for link in active if link != victim)
    return received_power(model, victim.length) / (model.noise_mw + model.mui_factor * interference)


def pairing_feasible(model: RadioModel, links: Iterable[RadioLink], beams: Optional[BeamState] = None) -> bool:
    """True iff every link's SINR reaches MS(c) for its rate."""
    active = list(links)
    thresholds = [model.min_sinr(link.rate) for link in active]
    if isinstance(model.beam_policy, AdjacencyOnly):
        return True
    if beams is None:
        beams = BeamState.for_links(active)
    return all(sinr(model, link, active, beams) >= threshold for link, threshold in zip(active, thresholds))
