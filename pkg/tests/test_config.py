import json

import pytest

from mpmh_cli.config import (
    BUILTIN_SCENARIOS,
    build_scenario,
    example_scenario,
    find_config_file,
    load_scenario_document,
    resolve_document,
    validate_and_load,
)
from mpmh_cli.errors import ScenarioError
from mpmh_cli.radio import SectorBeam


def fig1b_document(**changes):
    document = BUILTIN_SCENARIOS["fig1b"]()
    document.update(changes)
    return document


class TestBuiltins:
    """Tests for the scenarios shipped with the package."""

    def test_worked_example(self):
        """Test the static six-node scenario."""
        scenario = validate_and_load("fig1b")
        assert scenario.static
        assert scenario.topology.n == 6
        assert scenario.topology.rate("A", "B") == 1
        assert scenario.topology.rate("B", "F") == 6
        assert scenario.flows[0].demand_pkts == 18
        assert scenario.mpmh.epsilon == 2.0

    def test_ten_node_scenario(self):
        """Test defaults and the tracked heavy flow."""
        scenario = validate_and_load("ten-node")
        assert not scenario.static
        assert scenario.mpmh.epsilon == 0.0625
        assert scenario.mpmh.h_max == 3
        assert scenario.topology.rate("B", "C") == 1
        assert scenario.tracked_flows == frozenset({0})
        assert scenario.sim.length_slots == 50_000
        assert scenario.seeds == 1

    def test_single_flow(self):
        """Test the small relay scenario."""
        scenario = validate_and_load("single-flow")
        assert scenario.traffic.load == 0.2
        assert scenario.sim.delay_threshold_slots == 2500

    def test_example_document_builds(self):
        """Test that the init template is a valid scenario."""
        scenario = build_scenario(example_scenario())
        assert len(scenario.flows) == 10
        assert scenario.seeds == 3
        assert all(f.src != f.dst for f in scenario.flows)


class TestLookup:
    """Tests for resolving scenario names and files."""

    def test_file_path(self, tmp_path):
        """Test loading a scenario straight from a file."""
        path = tmp_path / "mine.json"
        path.write_text(json.dumps(fig1b_document(name="mine")))
        document, source = load_scenario_document(str(path))
        assert document["name"] == "mine"
        assert source == path

    def test_found_in_parent_directory(self, tmp_path):
        """Test that scenarios/NAME.json is searched upwards."""
        (tmp_path / "scenarios").mkdir()
        (tmp_path / "scenarios" / "lab.json").write_text(json.dumps(fig1b_document(name="lab")))
        nested = tmp_path / "a" / "b"
        nested.mkdir(parents=True)
        assert validate_and_load("lab", str(nested)).name == "lab"
        assert find_config_file(str(nested), "scenarios/lab.json") == (tmp_path / "scenarios" / "lab.json").resolve()

    def test_missing_scenario(self, tmp_path):
        """Test that an unknown name is a missing file."""
        with pytest.raises(FileNotFoundError):
            validate_and_load("nowhere", str(tmp_path))

    def test_empty_file(self, tmp_path):
        """Test that an empty scenario file is rejected."""
        path = tmp_path / "empty.json"
        path.write_text("  \n")
        with pytest.raises(ScenarioError, match="empty"):
            validate_and_load(str(path))

    def test_invalid_json(self, tmp_path):
        """Test that broken JSON reports its line."""
        path = tmp_path / "broken.json"
        path.write_text('{"name": \n')
        with pytest.raises(ScenarioError, match="invalid JSON"):
            validate_and_load(str(path))


class TestValidation:
    """Tests for schema errors and their field paths."""

    def test_unknown_section_key(self):
        """Test that typos in a section are named."""
        with pytest.raises(ScenarioError) as excinfo:
            build_scenario(fig1b_document(mpmh={"foo": 1}))
        assert excinfo.value.field == "mpmh.foo"

    def test_unknown_top_level_key(self):
        """Test that unknown sections are rejected."""
        with pytest.raises(ScenarioError) as excinfo:
            build_scenario(fig1b_document(extras={}))
        assert excinfo.value.field == "extras"

    def test_demand_only_without_traffic(self):
        """Test that explicit demands and a traffic section exclude each other."""
        document = fig1b_document(traffic={"load": 1.0})
        with pytest.raises(ScenarioError) as excinfo:
            build_scenario(document)
        assert excinfo.value.field == "flows[0].demand_pkts"

    def test_static_needs_demand(self):
        """Test that a static scenario must give each flow a demand."""
        with pytest.raises(ScenarioError) as excinfo:
            build_scenario(fig1b_document(flows=[{"src": "A", "dst": "B"}]))
        assert excinfo.value.field == "flows[0].demand_pkts"

    def test_unknown_node(self):
        """Test that flow endpoints must exist."""
        with pytest.raises(ScenarioError) as excinfo:
            build_scenario(fig1b_document(flows=[{"src": "Z", "dst": "B", "demand_pkts": 1}]))
        assert excinfo.value.field == "flows[0].src"

    def test_link_without_endpoint(self):
        """Test that a link entry missing 'from' is named."""
        document = fig1b_document()
        del document["topology"]["links"][0]["from"]
        with pytest.raises(ScenarioError) as excinfo:
            build_scenario(document)
        assert excinfo.value.field == "topology.links[0].from"

    def test_malformed_blocked_pair(self):
        """Test that blocked links must be two node ids."""
        document = fig1b_document()
        document["topology"]["blocked"] = [["A", "B"], ["C"]]
        with pytest.raises(ScenarioError) as excinfo:
            build_scenario(document)
        assert excinfo.value.field == "topology.blocked[1]"

    def test_rate_outside_alphabet(self):
        """Test that link rates must come from the alphabet."""
        document = fig1b_document()
        document["topology"]["links"][0]["rate"] = 7
        with pytest.raises(ScenarioError) as excinfo:
            build_scenario(document)
        assert excinfo.value.field == "topology"

    def test_bad_beam_policy(self):
        """Test that only the two beam policies are known."""
        with pytest.raises(ScenarioError) as excinfo:
            build_scenario(fig1b_document(radio={"beam": {"policy": "omni"}}))
        assert excinfo.value.field == "radio.beam.policy"

    def test_sector_beam(self):
        """Test that sector beams get their width in radians."""
        scenario = build_scenario(fig1b_document(radio={"beam": {"policy": "sector", "beamwidth_deg": 60}}))
        assert isinstance(scenario.radio.beam_policy, SectorBeam)

    def test_invalid_sim_parameter(self):
        """Test that parameter errors carry the section name."""
        with pytest.raises(ScenarioError) as excinfo:
            build_scenario(fig1b_document(sim={"length_slots": 0}))
        assert excinfo.value.field == "sim"

    def test_flow_weight_count(self):
        """Test one traffic weight per flow."""
        document = BUILTIN_SCENARIOS["ten-node"]()
        document["traffic"]["flow_weights"] = [1, 2]
        with pytest.raises(ScenarioError) as excinfo:
            build_scenario(document)
        assert excinfo.value.field == "traffic.flow_weights"


class TestResolved:
    """Tests for the resolved document and its digest."""

    def test_defaults_are_filled(self):
        """Test that omitted sections appear with defaults."""
        resolved = resolve_document(fig1b_document())
        assert resolved["oracle"]["max_hops"] == 8
        assert resolved["sim"]["seeds"] == 1
        assert "traffic" not in resolved

    def test_digest_is_stable(self):
        """Test that the same scenario hashes the same."""
        assert validate_and_load("fig1b").digest == validate_and_load("fig1b").digest
        assert len(validate_and_load("fig1b").digest) == 10

    def test_overrides_change_digest(self):
        """Test that a load or scheduler override is part of the hash."""
        scenario = validate_and_load("ten-node")
        assert scenario.with_load(2.0).digest != scenario.digest
        assert scenario.with_load(2.0).traffic.load == 2.0
        assert scenario.with_scheduler("fdmac").digest != scenario.digest

    def test_invalid_overrides(self):
        """Test override validation."""
        with pytest.raises(ScenarioError):
            validate_and_load("ten-node").with_scheduler("tdma")
        with pytest.raises(ValueError):
            validate_and_load("fig1b").with_load(1.0)
