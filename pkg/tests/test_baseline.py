import logging
from fractions import Fraction

from mpmh_cli.baseline import (
    UNIFORM_RATE,
    BaselineKind,
    direct_path_sets,
    schedule_fdmac,
    schedule_fdmac_ur,
    uniform_instance,
)
from mpmh_cli.mpmh import validate_schedule
from mpmh_cli.network import Flow


class TestFdmac:
    """Tests for the single-hop greedy baseline."""

    def test_worked_example_takes_eighteen_slots(self, fig1b):
        """Test that 18 packets over the rate-1 direct link need 18 slots."""
        schedule = schedule_fdmac(fig1b.nominal_flows(static=True), fig1b.topology, fig1b.radio)
        assert schedule.total_slots == 18
        assert schedule.k == 1

    def test_greedy_packs_non_adjacent_links(self, fig1b):
        """Test that the heaviest flow opens the pairing and adjacent links wait."""
        flows = [Flow(0, "A", "C", 10), Flow(1, "C", "E", 6), Flow(2, "D", "F", 4)]
        schedule = schedule_fdmac(flows, fig1b.topology, fig1b.radio)
        assert [({str(h.link) for h in p.hops}, p.delta) for p in schedule.pairings] == [
            ({"A->C", "D->F"}, 2),
            ({"C->E"}, 2),
        ]

    def test_schedule_is_valid(self, fig1b):
        """Test that baseline output passes the same validator."""
        flows = [Flow(0, "A", "C", 10), Flow(1, "C", "E", 6), Flow(2, "D", "F", 4), Flow(3, "E", "B", 7)]
        schedule = schedule_fdmac(flows, fig1b.topology, fig1b.radio)
        path_sets, _ = direct_path_sets(flows, fig1b.topology)
        assert validate_schedule(schedule, path_sets, fig1b.topology, fig1b.radio) == []

    def test_blocked_flow_is_unschedulable(self, fig1b, caplog):
        """Test that a flow without a direct link is reported."""
        flows = [Flow(0, "A", "C", 5), Flow(1, "B", "C", 5)]
        with caplog.at_level(logging.WARNING, logger="mpmh_cli"):
            schedule = schedule_fdmac(flows, fig1b.topology, fig1b.radio)
        assert schedule.unschedulable == (1,)
        assert "no relay" in caplog.text

    def test_flows_without_demand_are_skipped(self, fig1b):
        """Test that idle flows produce no hops."""
        path_sets, blocked = direct_path_sets([Flow(0, "A", "B", 0)], fig1b.topology)
        assert path_sets == [] and blocked == []


class TestUniformRate:
    """Tests for the rate-agnostic variant."""

    def test_uniform_rate_is_half_a_packet(self):
        """Test the 1 Gbps rate under 2 Gbps per packet-slot."""
        assert UNIFORM_RATE == Fraction(1, 2)
        assert BaselineKind("fdmac-ur") is BaselineKind.FDMAC_UR

    def test_worked_example_doubles(self, fig1b):
        """Test that 18 packets at half a packet per slot take 36 slots."""
        schedule = schedule_fdmac_ur(fig1b.nominal_flows(static=True), fig1b.topology, fig1b.radio)
        assert schedule.total_slots == 36

    def test_uniform_instance_is_valid_for_its_schedules(self, fig1b):
        """Test validation against the uniform copy."""
        flows = [Flow(0, "A", "C", 3), Flow(1, "D", "F", 5)]
        topology, radio = uniform_instance(fig1b.topology, fig1b.radio)
        schedule = schedule_fdmac_ur(flows, fig1b.topology, fig1b.radio)
        path_sets, _ = direct_path_sets(flows, topology)
        assert validate_schedule(schedule, path_sets, topology, radio) == []
        assert schedule.total_slots == 10
