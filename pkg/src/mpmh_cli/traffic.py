"""Packet arrivals: Poisson and interrupted Poisson (ON/OFF) streams."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
import pandas as pd

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

SLOT_SECONDS = 5e-6
REFERENCE_RATE_BPS = 2e9
MODES = ("poisson", "ipp")


def lambda_from_load(load: float, packet_bits: float, flow_count: int, reference_bps: float = REFERENCE_RATE_BPS) -> float:
    """Per-flow arrival rate in packets/second for a normalized traffic load."""
    if min(load, packet_bits, flow_count, reference_bps) <= 0:
        raise ConfigurationError("load, packet size, flow count and reference rate must all be > 0")
    return load * reference_bps / (packet_bits * flow_count)


def load_from_lambda(rate: float, packet_bits: float, flow_count: int, reference_bps: float = REFERENCE_RATE_BPS) -> float:
    return rate * packet_bits * flow_count / reference_bps


def per_slot(rate_per_second: float, slot_seconds: float = SLOT_SECONDS) -> float:
    return rate_per_second * slot_seconds


@dataclass(frozen=True)
class IppShape:
    """Hyper-exponential inter-arrival shape: rates `lambda1`, `lambda2` with weights `p1`, `p2`."""

    lambda1: float = 4.0
    lambda2: float = 1.0
    p1: float = 0.5
    p2: float = 0.5

    def __post_init__(self):
        if self.lambda1 <= 0 or self.lambda2 <= 0:
            raise ConfigurationError("IPP rates must be > 0")
        if self.p1 < 0 or self.p2 < 0 or abs(self.p1 + self.p2 - 1.0) > 1e-9:
            raise ConfigurationError("IPP weights must be non-negative and sum to 1")


class IppParams(NamedTuple):
    lambda_on: float
    r1: float
    r2: float
    mean_interarrival: float


def ipp_params(lambda1: float, lambda2: float, p1: float, p2: float) -> IppParams:
    """ON-state arrival rate, ON->OFF rate r1, OFF->ON rate r2 and mean inter-arrival time."""
    IppShape(lambda1, lambda2, p1, p2)
    mean = p1 / lambda1 + p2 / lambda2
    lambda_on = p1 * lambda1 + p2 * lambda2
    r1 = p1 * p2 * (lambda1 - lambda2) ** 2 / lambda_on
    r2 = lambda1 * lambda2 / lambda_on
    return IppParams(lambda_on, r1, r2, mean)


def scale_ipp_to_rate(shape: IppShape, rate: float) -> IppShape:
    """Rescale both rates so the long-run arrival rate equals `rate`."""
    if rate <= 0:
        raise ConfigurationError("target rate must be > 0")
    factor = rate * ipp_params(shape.lambda1, shape.lambda2, shape.p1, shape.p2).mean_interarrival
    return replace(shape, lambda1=shape.lambda1 * factor, lambda2=shape.lambda2 * factor)


@dataclass(frozen=True)
class TrafficSpec:
    mode: str = "poisson"
    load: float = 1.0
    packet_bytes: int = 1000
    ipp_shape: IppShape = field(default_factory=IppShape)
    flow_weights: tuple[float, ...] = ()
    initial_packets_max: int = 5
    slot_seconds: float = SLOT_SECONDS
    reference_bps: float = REFERENCE_RATE_BPS

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"traffic mode must be one of {', '.join(MODES)}")
        if self.load <= 0:
            raise ConfigurationError("traffic load must be > 0")
        if self.packet_bytes <= 0:
            raise ConfigurationError("packet_bytes must be > 0")
        if any(w < 0 for w in self.flow_weights) or (self.flow_weights and sum(self.flow_weights) <= 0):
            raise ConfigurationError("flow weights must be non-negative with a positive sum")
        if self.initial_packets_max < 0:
            raise ConfigurationError("initial_packets_max must be >= 0")

    def flow_rates(self, flow_count: int) -> np.ndarray:
        """Per-flow arrival rate in packets/slot; weights reshape demand, not the total."""
        base = per_slot(
            lambda_from_load(self.load, self.packet_bytes * 8, flow_count, self.reference_bps), self.slot_seconds
        )
        if not self.flow_weights:
            return np.full(flow_count, base)
        if len(self.flow_weights) != flow_count:
            raise ConfigurationError(f"{len(self.flow_weights)} flow weights given for {flow_count} flows")
        weights = np.asarray(self.flow_weights, dtype=float)
        return base * weights * flow_count / weights.sum()


@dataclass(frozen=True)
class ArrivalStream:
    """Sorted arrival times (in slots, real-valued) per flow."""

    times: tuple[np.ndarray, ...]

    @property
    def flow_count(self) -> int:
        return len(self.times)

    def slots(self, flow: int) -> np.ndarray:
        return np.floor(self.times[flow]).astype(np.int64)

    def total(self) -> int:
        return int(sum(len(t) for t in self.times))


def _poisson_times(rng: np.random.Generator, rate: float, horizon: float) -> np.ndarray:
    if rate <= 0 or horizon <= 0:
        return np.empty(0)
    chunks = []
    elapsed = 0.0
    expected = rate * horizon
    batch = int(expected + 6 * np.sqrt(expected) + 16)
    while elapsed < horizon:
        times = elapsed + np.cumsum(rng.exponential(1.0 / rate, size=batch))
        chunks.append(times)
        elapsed = float(times[-1])
    times = np.concatenate(chunks)
    return times[times < horizon]


def _ipp_times(rng: np.random.Generator, shape: IppShape, horizon: float) -> np.ndarray:
    params = ipp_params(shape.lambda1, shape.lambda2, shape.p1, shape.p2)
    if params.r1 == 0:
        return _poisson_times(rng, params.lambda_on, horizon)
    if horizon <= 0:
        return np.empty(0)
    on = rng.random() < params.r2 / (params.r1 + params.r2)
    starts, lengths = [], []
    clock = 0.0
    mean_cycle = 1.0 / params.r1 + 1.0 / params.r2
    batch = int(horizon / mean_cycle) + 16
    while clock < horizon:
        on_len = rng.exponential(1.0 / params.r1, size=batch)
        off_len = rng.exponential(1.0 / params.r2, size=batch)
        pairs = np.column_stack((on_len, off_len) if on else (off_len, on_len)).ravel()
        edges = clock + np.concatenate(([0.0], np.cumsum(pairs)))
        offset = 0 if on else 1
        starts.append(edges[offset:-1:2])
        lengths.append(pairs[offset::2])
        clock = float(edges[-1])
    on_starts = np.concatenate(starts)
    on_lengths = np.concatenate(lengths)
    keep = on_starts < horizon
    on_starts = on_starts[keep]
    on_lengths = np.minimum(on_lengths[keep], horizon - on_starts)
    cumulative = np.cumsum(on_lengths)
    if len(cumulative) == 0:
        return np.empty(0)
    on_time = _poisson_times(rng, params.lambda_on, float(cumulative[-1]))
    period = np.searchsorted(cumulative, on_time, side="right")
    return on_starts[period] + on_time - (cumulative[period] - on_lengths[period])


def generate(spec: TrafficSpec, flow_count: int, horizon_slots: int, seed: int) -> ArrivalStream:
    """Independent per-flow arrival streams over `[0, horizon_slots)`."""
    if horizon_slots < 0:
        raise ValueError("horizon must be non-negative")
    rates = spec.flow_rates(flow_count)
    children = np.random.SeedSequence(seed).spawn(flow_count)
    streams = []
    for rate, child in zip(rates, children):
        rng = np.random.default_rng(child)
        backlog = rng.integers(0, spec.initial_packets_max + 1) if horizon_slots > 0 else 0
        if spec.mode == "poisson":
            times = _poisson_times(rng, float(rate), horizon_slots)
        else:
            times = _ipp_times(rng, scale_ipp_to_rate(spec.ipp_shape, float(rate)), horizon_slots)
        streams.append(np.concatenate((np.zeros(backlog), times)))
    logger.debug("generated %d arrivals for %d flows", sum(len(s) for s in streams), flow_count)
    return ArrivalStream(tuple(streams))


def write_replay(stream: ArrivalStream, path: Path) -> None:
    """One row per arrival: flow id, slot."""
    frame = pd.DataFrame(
        {
            "flow": np.concatenate([np.full(len(t), i, dtype=np.int64) for i, t in enumerate(stream.times)] or [[]]),
            "slot": np.concatenate([stream.slots(i) for i in range(stream.flow_count)] or [[]]),
        }
    )
    frame.to_csv(path, index=False, lineterminator="\n")


def read_replay(path: Path, flow_count: int, horizon_slots: Optional[int] = None) -> ArrivalStream:
    frame = pd.read_csv(path)
    missing = {"flow", "slot"} - set(frame.columns)
    if missing:
        raise ConfigurationError(f"replay file {path} lacks column(s) {', '.join(sorted(missing))}")
    if len(frame) and (frame["flow"].min() < 0 or frame["flow"].max() >= flow_count):
        raise ConfigurationError(f"replay file {path} references flows outside 0..{flow_count - 1}")
    if horizon_slots is not None:
        frame = frame[frame["slot"] < horizon_slots]
    times: list[np.ndarray] = []
    for flow in range(flow_count):
        slots = frame.loc[frame["flow"] == flow, "slot"].to_numpy(dtype=float)
        times.append(np.sort(slots))
    return ArrivalStream(tuple(times))


def empirical_interarrival(times: Sequence[float]) -> tuple[float, float]:
    """Mean and squared coefficient of variation of the gaps."""
    gaps = np.diff(np.asarray(times, dtype=float))
    if len(gaps) == 0:
        return float("nan"), float("nan")
    mean = float(gaps.mean())
    return mean, float(gaps.var() / mean**2)
