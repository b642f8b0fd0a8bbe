import copy
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .errors import ConfigurationError, MpmhError, ScenarioError
from .mpmh import MpmhParams, select_mpmh_flows
from .network import (
    DistanceQuantizer,
    Flow,
    Link,
    Node,
    SnrQuantizer,
    Topology,
    generate_topology,
    rate_from_distance,
)
from .radio import AdjacencyOnly, RadioModel, SectorBeam, db_to_linear, default_rate_table
from .sim import SCHEDULERS, OracleParams, SimParams
from .traffic import IppShape, TrafficSpec

SCENARIO_DIR = "scenarios"

DEFAULTS: dict[str, Any] = {
    "topology": {
        "arena_m": 8.0,
        "quantizer": "distance",
        "symmetric": True,
        "rate_alphabet": None,
        "blocked": [],
    },
    "radio": {
        "tx_power_mw": 1000.0,
        "ref_loss_db": -68.0,
        "path_loss_exp": 2.0,
        "mui_factor": 1.0,
        "bandwidth_hz": 2.16e9,
        "noise_psd_dbm_per_hz": -174.0,
        "rate_table": None,
        "beam": {"policy": "adjacency", "beamwidth_deg": 30.0},
    },
    "traffic": {
        "mode": "poisson",
        "load": 1.0,
        "packet_bytes": 1000,
        "ipp": {"lambda1": 4.0, "lambda2": 1.0, "p1": 0.5, "p2": 0.5},
        "flow_weights": [],
        "initial_packets_max": 5,
        "replay": None,
    },
    "mpmh": {"epsilon": 0.0625, "h_max": 3, "frame_slot_cap": 1000, "seed_rule": "closest"},
    "sim": {
        "length_slots": 50_000,
        "delay_threshold_slots": 25_000,
        "poll_slots": 1,
        "sched_slots": 2,
        "push_slots": 1,
        "ema_alpha": 0.1,
        "seeds": 1,
    },
    "oracle": {"max_hops": 8, "method": "auto", "node_limit": 20_000, "time_limit_s": 60.0, "split_granularity": 1},
    "scheduler": "mpmh",
}

TOP_LEVEL_KEYS = {"name", "topology", "flows", "radio", "traffic", "mpmh", "sim", "oracle", "scheduler"}
TOPOLOGY_KEYS = {"nodes", "generate", "links", *DEFAULTS["topology"]}


def _worked_example() -> dict:
    links = [("A", "B", 1), ("A", "C", 5), ("C", "E", 3), ("E", "B", 6), ("A", "D", 6), ("D", "F", 2), ("F", "B", 6)]
    return {
        "name": "fig1b",
        "topology": {
            "nodes": [
                {"id": "A", "x": 0.0, "y": 2.0, "pnc": True},
                {"id": "B", "x": 6.0, "y": 2.0},
                {"id": "C", "x": 2.0, "y": 4.0},
                {"id": "D", "x": 2.0, "y": 0.0},
                {"id": "E", "x": 4.0, "y": 4.0},
                {"id": "F", "x": 4.0, "y": 0.0},
            ],
            "links": [{"from": a, "to": b, "rate": r} for a, b, r in links],
            "rate_alphabet": [1, 2, 3, 4, 5, 6],
        },
        "radio": {"rate_table": [[10 + 6 * i, i + 1] for i in range(6)]},
        "flows": [{"src": "A", "dst": "B", "demand_pkts": 18}],
        # a lone flow has ratio 1 against the average, so 2.0 admits it
        "mpmh": {"epsilon": 2.0},
    }


def _ten_node() -> dict:
    positions = {
        "A": (4.0, 4.0),
        "B": (0.5, 0.5),
        "C": (7.5, 7.5),
        "D": (0.5, 7.5),
        "E": (7.5, 0.5),
        "F": (2.5, 4.0),
        "G": (5.5, 4.0),
        "H": (4.0, 1.5),
        "I": (4.0, 6.5),
        "J": (2.2, 2.2),
    }
    pairs = [("B", "C"), ("D", "I"), ("E", "H"), ("F", "A"), ("G", "C"), ("H", "J"), ("I", "G"), ("A", "E"), ("J", "F"), ("C", "I")]
    return {
        "name": "ten-node",
        "topology": {
            "nodes": [{"id": k, "x": x, "y": y, "pnc": k == "A"} for k, (x, y) in positions.items()],
            "arena_m": 8.0,
        },
        "flows": [{"src": s, "dst": d} for s, d in pairs],
        # flow 0 spans the arena diagonal (rate 1) and carries the heavy demand
        "traffic": {"mode": "poisson", "load": 1.0, "flow_weights": [10, 1, 1, 1, 1, 1, 1, 1, 1, 1]},
    }


def _single_flow() -> dict:
    return {
        "name": "single-flow",
        "topology": {
            "nodes": [
                {"id": "A", "x": 0.0, "y": 0.0, "pnc": True},
                {"id": "B", "x": 2.0, "y": 0.0},
                {"id": "C", "x": 1.0, "y": 0.8},
            ],
            "arena_m": 4.0,
        },
        "flows": [{"src": "A", "dst": "B"}],
        "traffic": {"mode": "poisson", "load": 0.2},
        "mpmh": {"epsilon": 2.0},
        "sim": {"length_slots": 5000, "delay_threshold_slots": 2500},
    }


BUILTIN_SCENARIOS = {"fig1b": _worked_example, "ten-node": _ten_node, "single-flow": _single_flow}


def find_config_file(directory: str, filename: str) -> Optional[Path]:
    """
    Search for a file in the directory and parent directories.
    This lets `--scenario NAME` resolve scenarios/NAME.json from a subdirectory.
    """
    current = Path(directory).resolve()

    # Search up to 5 levels of parent directories
    for _ in range(5):
        config_file = current / filename
        if config_file.exists():
            return config_file

        parent = current.parent
        if parent == current:  # Reached filesystem root
            break
        current = parent

    return None


def find_scenario_file(name: str, directory: str = ".") -> Optional[Path]:
    return find_config_file(directory, f"{SCENARIO_DIR}/{name}.json")


def load_scenario_document(value: Union[str, Path], directory: str = ".") -> tuple[dict, Optional[Path]]:
    """
    Resolve `value` to a scenario document.
    Returns (document, source_path); source_path is None for built-ins.
    """
    path = Path(value)
    if path.is_file():
        return _read_json(path), path
    if str(value) in BUILTIN_SCENARIOS:
        return BUILTIN_SCENARIOS[str(value)](), None
    found = find_scenario_file(str(value), directory)
    if found:
        return _read_json(found), found
    raise FileNotFoundError(
        f"Scenario '{value}' is neither a file, a built-in ({', '.join(BUILTIN_SCENARIOS)}) "
        f"nor {SCENARIO_DIR}/{value}.json"
    )


def _read_json(path: Path) -> dict:
    text = path.read_text()
    if not text.strip():
        raise ScenarioError(str(path), "empty scenario file")
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(str(path), f"invalid JSON ({e.msg} at line {e.lineno})") from e
    if not isinstance(document, dict):
        raise ScenarioError(str(path), "top level must be an object")
    return document


def _merge(defaults: dict, given: dict, where: str) -> dict:
    if not isinstance(given, dict):
        raise ScenarioError(where, "must be an object")
    merged = copy.deepcopy(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise ScenarioError(f"{where}.{key}", "unknown key")
        if isinstance(defaults[key], dict) and defaults[key]:
            if not isinstance(value, dict):
                raise ScenarioError(f"{where}.{key}", "must be an object")
            merged[key] = _merge(defaults[key], value, f"{where}.{key}")
        else:
            merged[key] = value
    return merged


def resolve_document(document: dict) -> dict:
    """Defaults applied, unknown keys rejected; the result is what gets echoed and hashed."""
    unknown = sorted(set(document) - TOP_LEVEL_KEYS)
    if unknown:
        raise ScenarioError(unknown[0], "unknown key")
    for required in ("topology", "flows"):
        if required not in document:
            raise ScenarioError(required, "is required")

    resolved: dict[str, Any] = {"name": document.get("name", "scenario")}
    topology = document["topology"]
    if not isinstance(topology, dict):
        raise ScenarioError("topology", "must be an object")
    for key in topology:
        if key not in TOPOLOGY_KEYS:
            raise ScenarioError(f"topology.{key}", "unknown key")
    resolved["topology"] = {**copy.deepcopy(DEFAULTS["topology"]), **copy.deepcopy(topology)}
    resolved["flows"] = copy.deepcopy(document["flows"])
    for section in ("radio", "mpmh", "sim", "oracle"):
        resolved[section] = _merge(DEFAULTS[section], document.get(section, {}), section)
    if "traffic" in document:
        resolved["traffic"] = _merge(DEFAULTS["traffic"], document["traffic"], "traffic")
    resolved["scheduler"] = document.get("scheduler", DEFAULTS["scheduler"])
    return resolved


def content_hash(resolved: dict) -> str:
    payload = json.dumps(resolved, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(payload).hexdigest()[:10]


@dataclass(frozen=True)
class Scenario:
    name: str
    topology: Topology
    flows: tuple[Flow, ...]
    radio: RadioModel
    traffic: Optional[TrafficSpec]
    mpmh: MpmhParams
    sim: SimParams
    oracle: OracleParams
    scheduler: str
    seeds: int
    resolved: dict = field(compare=False, repr=False)
    replay: Optional[Path] = None

    @property
    def static(self) -> bool:
        return self.traffic is None and self.replay is None

    @property
    def digest(self) -> str:
        return content_hash(self.resolved)

    def nominal_flows(self, static: bool = False) -> tuple[Flow, ...]:
        """Flows with demand intensity set to its configured value."""
        if self.static or static:
            return tuple(replace(f, demand_intensity=float(f.demand_pkts)) for f in self.flows)
        traffic = self.traffic or TrafficSpec()
        rates = traffic.flow_rates(len(self.flows))
        return tuple(replace(f, demand_pkts=0, demand_intensity=float(r)) for f, r in zip(self.flows, rates))

    @property
    def tracked_flows(self) -> frozenset[int]:
        """Flows chosen for multi-path on nominal intensities; flow metrics cover these."""
        return select_mpmh_flows(self.nominal_flows(), self.topology, self.mpmh.epsilon)

    def with_load(self, load: float) -> "Scenario":
        if self.traffic is None:
            raise ConfigurationError(f"scenario '{self.name}' has no traffic section to set a load on")
        resolved = copy.deepcopy(self.resolved)
        resolved["traffic"]["load"] = load
        return replace(self, traffic=replace(self.traffic, load=load), resolved=resolved)

    def with_h_max(self, h_max: int) -> "Scenario":
        resolved = copy.deepcopy(self.resolved)
        resolved["mpmh"]["h_max"] = h_max
        return replace(self, mpmh=replace(self.mpmh, h_max=h_max), resolved=resolved)

    def with_scheduler(self, scheduler: str) -> "Scenario":
        if scheduler not in SCHEDULERS:
            raise ScenarioError("scheduler", f"must be one of {', '.join(SCHEDULERS)}")
        resolved = copy.deepcopy(self.resolved)
        resolved["scheduler"] = scheduler
        return replace(self, scheduler=scheduler, resolved=resolved)


def _number(value: Any, where: str, minimum: Optional[float] = None, integer: bool = False) -> Any:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(where, "must be a number")
    if integer and not float(value).is_integer():
        raise ScenarioError(where, "must be an integer")
    if minimum is not None and value < minimum:
        raise ScenarioError(where, f"must be >= {minimum}")
    return int(value) if integer else float(value)


def _build_radio(section: dict) -> RadioModel:
    beam = section["beam"]
    for key in beam:
        if key not in DEFAULTS["radio"]["beam"]:
            raise ScenarioError(f"radio.beam.{key}", "unknown key")
    if beam["policy"] == "adjacency":
        policy = AdjacencyOnly()
    elif beam["policy"] == "sector":
        policy = SectorBeam(math.radians(_number(beam["beamwidth_deg"], "radio.beam.beamwidth_deg", 0)))
    else:
        raise ScenarioError("radio.beam.policy", "must be 'adjacency' or 'sector'")
    table = default_rate_table()
    if section["rate_table"] is not None:
        rows = section["rate_table"]
        if not isinstance(rows, list) or not rows or any(not isinstance(r, list) or len(r) != 2 for r in rows):
            raise ScenarioError("radio.rate_table", "must be a non-empty list of [sinr_db, rate] pairs")
        table = tuple(
            (db_to_linear(_number(db, f"radio.rate_table[{i}][0]")), _number(rate, f"radio.rate_table[{i}][1]", 1, True))
            for i, (db, rate) in enumerate(rows)
        )
    try:
        return RadioModel(
            tx_power_mw=_number(section["tx_power_mw"], "radio.tx_power_mw"),
            ref_loss_db=_number(section["ref_loss_db"], "radio.ref_loss_db"),
            path_loss_exp=_number(section["path_loss_exp"], "radio.path_loss_exp"),
            mui_factor=_number(section["mui_factor"], "radio.mui_factor"),
            bandwidth_hz=_number(section["bandwidth_hz"], "radio.bandwidth_hz"),
            noise_psd_mw_per_hz=db_to_linear(_number(section["noise_psd_dbm_per_hz"], "radio.noise_psd_dbm_per_hz")),
            rate_table=table,
            beam_policy=policy,
        )
    except ScenarioError:
        raise
    except ConfigurationError as e:
        raise ScenarioError("radio", str(e)) from e


def _build_topology(section: dict, radio: RadioModel) -> Topology:
    arena = _number(section["arena_m"], "topology.arena_m", 0)
    if "nodes" in section and "generate" in section:
        raise ScenarioError("topology", "give either 'nodes' or 'generate', not both")
    try:
        if "generate" in section:
            spec = section["generate"]
            unknown = sorted(set(spec) - {"count", "seed"})
            if unknown:
                raise ScenarioError(f"topology.generate.{unknown[0]}", "unknown key")
            base = generate_topology(
                _number(spec.get("count", 10), "topology.generate.count", 2, True),
                arena,
                _number(spec.get("seed", 0), "topology.generate.seed", 0, True),
            )
        elif "nodes" in section:
            nodes = []
            for i, entry in enumerate(section["nodes"]):
                unknown = sorted(set(entry) - {"id", "x", "y", "pnc"})
                if unknown:
                    raise ScenarioError(f"topology.nodes[{i}].{unknown[0]}", "unknown key")
                if "id" not in entry:
                    raise ScenarioError(f"topology.nodes[{i}].id", "is required")
                nodes.append(
                    Node(
                        str(entry["id"]),
                        _number(entry.get("x"), f"topology.nodes[{i}].x"),
                        _number(entry.get("y"), f"topology.nodes[{i}].y"),
                        bool(entry.get("pnc", False)),
                    )
                )
            base = Topology(tuple(nodes))
        else:
            raise ScenarioError("topology", "needs 'nodes' or 'generate'")

        alphabet = tuple(section["rate_alphabet"] or radio.rates)
        if "links" in section:
            rates = {}
            for i, entry in enumerate(section["links"]):
                unknown = sorted(set(entry) - {"from", "to", "rate"})
                if unknown:
                    raise ScenarioError(f"topology.links[{i}].{unknown[0]}", "unknown key")
                for end in ("from", "to"):
                    if end not in entry:
                        raise ScenarioError(f"topology.links[{i}].{end}", "is required")
                rate = _number(entry.get("rate"), f"topology.links[{i}].rate", 0, True)
                rates[Link(entry["from"], entry["to"])] = rate
                if section["symmetric"]:
                    rates.setdefault(Link(entry["to"], entry["from"]), rate)
            topology = Topology(base.nodes, rates, alphabet)
        else:
            if section["quantizer"] == "distance":
                quantizer = DistanceQuantizer.for_arena(arena, tuple(sorted(alphabet, reverse=True)))
            elif section["quantizer"] == "snr":
                quantizer = SnrQuantizer(tuple(alphabet))
            else:
                raise ScenarioError("topology.quantizer", "must be 'distance' or 'snr'")
            topology = rate_from_distance(radio, base, quantizer)
        blocked = []
        for i, pair in enumerate(section["blocked"]):
            if not isinstance(pair, list) or len(pair) != 2:
                raise ScenarioError(f"topology.blocked[{i}]", "must be a [from, to] pair")
            blocked.append(Link(*pair))
        return topology.with_blocked(blocked) if blocked else topology
    except ScenarioError:
        raise
    except (MpmhError, TypeError) as e:
        raise ScenarioError("topology", str(e)) from e


def _build_flows(entries: Any, topology: Topology, static: bool) -> tuple[Flow, ...]:
    if isinstance(entries, dict) and set(entries) == {"random"}:
        spec = entries["random"]
        count = _number(spec.get("count", 10), "flows.random.count", 1, True)
        rng = np.random.default_rng(_number(spec.get("seed", 0), "flows.random.seed", 0, True))
        ids = topology.node_ids
        entries = [{"src": ids[a], "dst": ids[b]} for a, b in (rng.choice(len(ids), 2, replace=False) for _ in range(count))]
    if not isinstance(entries, list) or not entries:
        raise ScenarioError("flows", "must be a non-empty list")
    flows = []
    for i, entry in enumerate(entries):
        unknown = sorted(set(entry) - {"src", "dst", "demand_pkts"})
        if unknown:
            raise ScenarioError(f"flows[{i}].{unknown[0]}", "unknown key")
        for end in ("src", "dst"):
            if entry.get(end) not in topology.node_ids:
                raise ScenarioError(f"flows[{i}].{end}", f"unknown node {entry.get(end)!r}")
        if "demand_pkts" in entry and not static:
            raise ScenarioError(f"flows[{i}].demand_pkts", "only valid in scenarios without a traffic section")
        if static and "demand_pkts" not in entry:
            raise ScenarioError(f"flows[{i}].demand_pkts", "is required without a traffic section")
        demand = _number(entry.get("demand_pkts", 0), f"flows[{i}].demand_pkts", 0, True)
        try:
            flows.append(Flow(i, entry["src"], entry["dst"], demand))
        except MpmhError as e:
            raise ScenarioError(f"flows[{i}]", str(e)) from e
    return tuple(flows)


def _build_traffic(section: dict) -> tuple[TrafficSpec, Optional[Path]]:
    ipp = section["ipp"]
    try:
        spec = TrafficSpec(
            mode=section["mode"],
            load=_number(section["load"], "traffic.load"),
            packet_bytes=_number(section["packet_bytes"], "traffic.packet_bytes", 1, True),
            ipp_shape=IppShape(**{k: _number(v, f"traffic.ipp.{k}") for k, v in ipp.items()}),
            flow_weights=tuple(_number(w, f"traffic.flow_weights[{i}]", 0) for i, w in enumerate(section["flow_weights"])),
            initial_packets_max=_number(section["initial_packets_max"], "traffic.initial_packets_max", 0, True),
        )
    except ScenarioError:
        raise
    except ConfigurationError as e:
        raise ScenarioError("traffic", str(e)) from e
    replay = Path(section["replay"]) if section["replay"] else None
    return spec, replay


def _build_params(cls: Any, section: dict, where: str) -> Any:
    try:
        return cls(**section)
    except (ConfigurationError, TypeError) as e:
        raise ScenarioError(where, str(e)) from e


def build_scenario(document: dict) -> Scenario:
    resolved = resolve_document(document)
    radio = _build_radio(resolved["radio"])
    topology = _build_topology(resolved["topology"], radio)
    static = "traffic" not in resolved
    flows = _build_flows(resolved["flows"], topology, static)
    traffic, replay = (None, None) if static else _build_traffic(resolved["traffic"])
    if traffic is not None and traffic.flow_weights and len(traffic.flow_weights) != len(flows):
        raise ScenarioError("traffic.flow_weights", f"needs one weight per flow ({len(flows)})")
    sim_section = dict(resolved["sim"])
    seeds = _number(sim_section.pop("seeds"), "sim.seeds", 1, True)
    sim = _build_params(SimParams, sim_section, "sim")
    mpmh = _build_params(MpmhParams, resolved["mpmh"], "mpmh")
    oracle = _build_params(OracleParams, resolved["oracle"], "oracle")
    if resolved["scheduler"] not in SCHEDULERS:
        raise ScenarioError("scheduler", f"must be one of {', '.join(SCHEDULERS)}")
    return Scenario(
        name=str(resolved["name"]),
        topology=topology,
        flows=flows,
        radio=radio,
        traffic=traffic,
        mpmh=mpmh,
        sim=sim,
        oracle=oracle,
        scheduler=resolved["scheduler"],
        seeds=seeds,
        resolved=resolved,
        replay=replay,
    )


def validate_and_load(value: Union[str, Path], directory: str = ".") -> Scenario:
    """Resolve, validate and build a scenario from a path, built-in name or scenarios/ lookup."""
    document, _ = load_scenario_document(value, directory)
    return build_scenario(document)


def example_scenario() -> dict:
    """Document written by `mpmh init`."""
    return {
        "name": "example",
        "topology": {"generate": {"count": 10, "seed": 1}, "arena_m": 8.0},
        "flows": {"random": {"count": 10, "seed": 1}},
        "traffic": {"mode": "poisson", "load": 2.0},
        "mpmh": {"epsilon": 0.0625, "h_max": 3},
        "sim": {"length_slots": 20000, "seeds": 3},
    }
