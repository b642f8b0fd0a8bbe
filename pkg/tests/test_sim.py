import logging
from collections import deque
from dataclasses import replace

import pytest

from mpmh_cli.config import validate_and_load
from mpmh_cli.errors import AccountingError, ConfigurationError, SchedulingError, SimulationError
from mpmh_cli.sim import (
    RUN_COLUMNS,
    FrameClock,
    FrameScheduler,
    OracleParams,
    SimParams,
    aggregate,
    evaluate_static,
    frame_demand_flows,
    jain_fairness,
    multi_hop_delivery_accounting,
    run,
    sweep,
)


@pytest.fixture
def single_flow(shorten):
    """Three-node relay scenario cut to 2000 slots."""
    return shorten(validate_and_load("single-flow"), 2000)


class TestFrameClock:
    """Tests for frame timing."""

    def test_overhead_precedes_transmission(self):
        """Test that poll, schedule and push slots come before the pairings."""
        clock = FrameClock()
        assert clock.begin_frame() == 4
        assert clock.finish_frame(10) == 14
        assert clock.current_slot == 14
        assert clock.frames == 1

    def test_empty_frame_still_advances(self):
        """Test that a frame without overhead or pairings takes one slot."""
        clock = FrameClock(0, 0, 0)
        clock.begin_frame()
        assert clock.finish_frame(0) == 1

    def test_invalid_params(self):
        """Test parameter validation."""
        with pytest.raises(ConfigurationError):
            SimParams(length_slots=0)
        with pytest.raises(ConfigurationError):
            SimParams(ema_alpha=0.0)
        with pytest.raises(ConfigurationError):
            OracleParams(method="simplex")


class TestAccounting:
    """Tests for hop-by-hop delivery accounting."""

    def test_worked_example_delivery_slots(self, fig1b_schedule, fig1b_path_sets):
        """Test that each path delivers at the end of its last hop's pairing."""
        queues = {0: deque([0] * 18)}
        result = multi_hop_delivery_accounting(fig1b_schedule, fig1b_path_sets, queues, 0, 100)
        by_slot = {}
        for record in result.delivered:
            by_slot[record.delivery_slot] = by_slot.get(record.delivery_slot, 0) + 1
        assert by_slot == {7: 3, 8: 6, 10: 9}
        assert not result.dropped
        assert not queues[0]

    def test_delay_threshold_drops_late_packets(self, fig1b_schedule, fig1b_path_sets):
        """Test that packets older than the threshold at delivery are dropped."""
        queues = {0: deque([0] * 18)}
        result = multi_hop_delivery_accounting(fig1b_schedule, fig1b_path_sets, queues, 0, 7)
        assert len(result.delivered) == 3
        assert len(result.dropped) == 15

    def test_out_of_order_schedule(self, fig1b_schedule, fig1b_path_sets):
        """Test that a later hop scheduled first is an accounting error."""
        swapped = replace(fig1b_schedule, pairings=tuple(reversed(fig1b_schedule.pairings)))
        with pytest.raises(AccountingError):
            multi_hop_delivery_accounting(swapped, fig1b_path_sets, {0: deque([0] * 18)}, 0, 100)

    def test_split_larger_than_queue(self, fig1b_schedule, fig1b_path_sets):
        """Test that a frame cannot move packets that never arrived."""
        with pytest.raises(AccountingError):
            multi_hop_delivery_accounting(fig1b_schedule, fig1b_path_sets, {0: deque([0] * 5)}, 0, 100)

    def test_partial_schedule_requeues(self, fig1b_schedule, fig1b_path_sets):
        """Test that packets still in flight go back to the queue head."""
        partial = replace(fig1b_schedule, pairings=fig1b_schedule.pairings[:1])
        queues = {0: deque([0] * 18 + [5])}
        result = multi_hop_delivery_accounting(partial, fig1b_path_sets, queues, 0, 100, complete=False)
        assert result.records == []
        assert sum(len(v) for v in result.requeued.values()) == 18
        assert list(queues[0]) == [0] * 18 + [5]

    def test_incomplete_schedule_rejected_when_complete(self, fig1b_schedule, fig1b_path_sets):
        """Test that a short pairing fails the capacity check."""
        first, *rest = fig1b_schedule.pairings
        short = replace(fig1b_schedule, pairings=(replace(first, delta=0), *rest))
        with pytest.raises(AccountingError):
            multi_hop_delivery_accounting(short, fig1b_path_sets, {0: deque([0] * 18)}, 0, 100)


class TestFrameScheduler:
    """Tests for the per-frame scheduler adapter."""

    def test_unknown_scheduler(self, fig1b):
        """Test that only the four schedulers are accepted."""
        with pytest.raises(ConfigurationError):
            FrameScheduler("tdma", fig1b)

    def test_oracle_improves_worked_example(self, fig1b):
        """Test that the oracle finds the nine-slot schedule."""
        schedule, _ = FrameScheduler("oracle", fig1b)(fig1b.nominal_flows(static=True))
        assert schedule.total_slots == 9

    def test_oracle_falls_back_on_large_frames(self, fig1b, caplog):
        """Test that frames above the hop budget keep the heuristic schedule."""
        scenario = replace(fig1b, oracle=OracleParams(max_hops=1))
        scheduler = FrameScheduler("oracle", scenario)
        with caplog.at_level(logging.WARNING, logger="mpmh_cli"):
            schedule, _ = scheduler(fig1b.nominal_flows(static=True))
            scheduler(fig1b.nominal_flows(static=True))
        assert schedule.total_slots == 10
        assert caplog.text.count("Oracle skipped") == 1

    def test_fit_defers_demand_beyond_the_cap(self, fig1b):
        """Test that an oversized frame is rescheduled on a smaller share of the backlog."""
        schedule, path_sets = FrameScheduler("mpmh", fig1b).fit(fig1b.nominal_flows(static=True), 5)
        assert 0 < schedule.total_slots <= 5
        assert 0 < sum(sum(ps.split) for ps in path_sets) < 18

    def test_fit_keeps_frames_under_the_cap(self, fig1b):
        """Test that a frame within the cap is scheduled on the whole backlog."""
        schedule, path_sets = FrameScheduler("mpmh", fig1b).fit(fig1b.nominal_flows(static=True), 1000)
        assert schedule.total_slots == 10
        assert path_sets[0].split == (3, 9, 6)


class TestRun:
    """Tests for the frame loop."""

    def test_packets_are_conserved(self, single_flow):
        """Test that every arrival is delivered, dropped or still queued."""
        report = run(single_flow, "mpmh", 0)
        assert report.arrivals == report.throughput + report.dropped + report.queued
        assert report.throughput > 0
        assert report.frames == len(report.frame_slots)

    def test_same_seed_same_report(self, single_flow):
        """Test run determinism."""
        first, second = run(single_flow, "mpmh", 3), run(single_flow, "mpmh", 3)
        assert first.row() == second.row()

    def test_light_load_is_fully_delivered(self, single_flow):
        """Test that a flow well under capacity loses nothing and waits about a frame."""
        report = run(single_flow, "mpmh", 0)
        assert report.dropped == 0
        assert report.queued < 10
        overhead = FrameClock().overhead
        assert report.avg_delay <= 3 * (report.mean_frame_slots + overhead)

    def test_capped_frames_strand_nothing_mid_path(self, single_flow, monkeypatch):
        """Test that frames over the cap only start packets they can deliver."""
        scenario = single_flow.with_load(3.0)
        scenario = replace(scenario, mpmh=replace(scenario.mpmh, frame_slot_cap=20))
        requeued = []

        def accounting(*args, **kwargs):
            outcome = multi_hop_delivery_accounting(*args, **kwargs)
            requeued.append(sum(len(v) for v in outcome.requeued.values()))
            return outcome

        monkeypatch.setattr("mpmh_cli.sim.multi_hop_delivery_accounting", accounting)
        report = run(scenario, "mpmh", 0)
        assert max(report.frame_slots) <= 20
        # only the frame cut by the end of the run may leave packets behind
        assert not any(requeued[:-1])
        assert report.arrivals == report.throughput + report.dropped + report.queued

    def test_fdmac_on_ten_node_topology(self, shorten):
        """Test a short baseline run over the ten-flow topology."""
        scenario = shorten(validate_and_load("ten-node"), 1500)
        report = run(scenario, "fdmac", 0)
        assert report.arrivals == report.throughput + report.dropped + report.queued
        assert report.fairness is None or 0 < report.fairness <= 1
        assert list(report.row()) == RUN_COLUMNS

    def test_static_scenario_cannot_run(self, fig1b):
        """Test that a scenario without traffic has nothing to simulate."""
        with pytest.raises(ConfigurationError):
            run(fig1b, "mpmh", 0)

    def test_scheduling_failure_aborts_with_frame(self, single_flow, monkeypatch):
        """Test that a scheduling error stops the run and names the frame."""

        def failing(*args, **kwargs):
            raise SchedulingError("no pairing")

        monkeypatch.setattr("mpmh_cli.sim.plan_frame", failing)
        with pytest.raises(SimulationError) as excinfo:
            run(single_flow, "mpmh", 0)
        assert excinfo.value.frame == 1


class TestFairness:
    """Tests for Jain's index."""

    def test_equal_shares(self):
        """Test the perfectly fair case."""
        assert jain_fairness([1, 1]) == pytest.approx(1.0)

    def test_one_starved_flow(self):
        """Test two flows with one idle."""
        assert jain_fairness([1, 0]) == pytest.approx(0.5)

    def test_undefined(self):
        """Test that no traffic has no index."""
        assert jain_fairness([]) is None
        assert jain_fairness([0, 0]) is None


class TestStatic:
    """Tests for single-frame evaluation."""

    def test_worked_example_with_oracle(self, fig1b):
        """Test heuristic, optimum and joint split of the worked example."""
        result = evaluate_static(fig1b, "mpmh", oracle=True)
        assert result.violations == ()
        assert result.schedule.total_slots == 10
        assert result.oracle_slots == 9
        assert result.oracle_status == "optimal"
        assert result.joint_slots == 9
        assert result.joint_split == {0: (3, 9, 6)}
        assert result.delivered == result.demand == 18

    @pytest.mark.parametrize("scheduler, slots", [("fdmac", 18), ("fdmac-ur", 36)])
    def test_baselines(self, fig1b, scheduler, slots):
        """Test the single-hop schedulers on the worked example."""
        result = evaluate_static(fig1b, scheduler, oracle=True)
        assert result.schedule.total_slots == slots
        assert result.delivered == 18
        assert result.oracle_slots is None

    def test_validate_only_skips_delivery(self, fig1b):
        """Test that validation alone does not count deliveries."""
        result = evaluate_static(fig1b, "mpmh", validate_only=True)
        assert result.violations == ()
        assert result.delivered == 0

    def test_frame_demand_for_dynamic_scenario(self):
        """Test that nominal intensities become one frame of demand."""
        flows = frame_demand_flows(validate_and_load("ten-node"))
        assert len(flows) == 10
        assert all(f.demand_pkts > 0 for f in flows)
        assert flows[0].demand_pkts > flows[1].demand_pkts


class TestSweep:
    """Tests for load sweeps."""

    def test_grid(self, shorten):
        """Test that every cell produces one row."""
        scenario = shorten(validate_and_load("single-flow"), 800)
        result = sweep(scenario, [0.2, 0.4], ["mpmh", "fdmac"], [0])
        assert len(result.runs) == 4
        assert result.failures.empty
        assert set(result.runs["scheduler"]) == {"mpmh", "fdmac"}
        table = result.aggregate
        assert {"scheduler", "load", "avg_delay_mean", "throughput_std"} <= set(table.columns)
        assert len(table) == 4

    def test_h_max_grid(self, shorten):
        """Test that hop limits add a column and multiply the cells."""
        scenario = shorten(validate_and_load("single-flow"), 800)
        result = sweep(scenario, [0.2], ["mpmh"], [0], h_max_values=[1, 2])
        assert sorted(result.runs["h_max"]) == [1, 2]
        assert "h_max" in aggregate(result.runs).columns

    def test_unknown_scheduler(self, shorten):
        """Test that scheduler names are checked before running."""
        with pytest.raises(ConfigurationError):
            sweep(validate_and_load("single-flow"), [0.2], ["tdma"], [0])

    def test_failed_cells_are_recorded(self, shorten, monkeypatch, caplog):
        """Test that a failing cell is logged and kept out of the runs."""

        def failing(scenario, scheduler, seed):
            raise SimulationError(1, RuntimeError("boom"))

        monkeypatch.setattr("mpmh_cli.sim.run", failing)
        with caplog.at_level(logging.WARNING, logger="mpmh_cli"):
            result = sweep(validate_and_load("single-flow"), [0.2, 0.4], ["fdmac"], [0])
        assert result.runs.empty
        assert len(result.failures) == 2
        assert "boom" in result.failures["error"].iloc[0]
        assert "failed" in caplog.text


def mean_by_load(table, scheduler, metric):
    rows = table[table["scheduler"] == scheduler]
    return rows.set_index("load")[f"{metric}_mean"]


def saturation_load(series):
    """First load whose throughput reaches 95% of the curve's maximum."""
    return series[series >= 0.95 * series.max()].index.min()


class TestTrends:
    """Short-horizon checks of the protocol comparison."""

    @pytest.fixture
    def loaded(self, shorten):
        return shorten(validate_and_load("ten-node"), 10_000).with_load(6.0)

    def test_multi_path_beats_single_hop(self, loaded):
        """Test that MPMH delivers more than FDMAC at load 6."""
        assert run(loaded, "mpmh", 0).throughput > run(loaded, "fdmac", 0).throughput

    def test_three_hops_keep_up_with_two(self, loaded):
        """Test that a hop limit of 3 does not lose throughput against 2."""
        three = run(loaded.with_h_max(3), "mpmh", 0).throughput
        two = run(loaded.with_h_max(2), "mpmh", 0).throughput
        assert three >= 0.95 * two

    def test_oracle_gap_on_single_flow(self, shorten):
        """Test that the heuristic stays within 10% of the oracle's flow throughput."""
        scenario = shorten(validate_and_load("single-flow"), 2000).with_load(5.0)
        heuristic = run(scenario, "mpmh", 0).flow_throughput
        optimal = run(scenario, "oracle", 0).flow_throughput
        assert heuristic >= 0.9 * optimal


@pytest.fixture(scope="module", params=["poisson", "ipp"])
def protocol_sweep(request):
    """Ten seeds of the three protocols over loads 1 to 10 at full length."""
    scenario = validate_and_load("ten-node")
    scenario = replace(scenario, traffic=replace(scenario.traffic, mode=request.param))
    return sweep(scenario, range(1, 11), ["mpmh", "fdmac", "fdmac-ur"], range(10), workers=4).aggregate


@pytest.mark.slow
class TestProtocolComparison:
    """Full-length protocol comparison over both traffic modes."""

    def test_throughput_gain_at_high_load(self, protocol_sweep):
        """Test that MPMH averages at least 30% more throughput than FDMAC over loads 5 to 10."""
        mpmh = mean_by_load(protocol_sweep, "mpmh", "throughput").loc[5:]
        fdmac = mean_by_load(protocol_sweep, "fdmac", "throughput").loc[5:]
        assert (mpmh / fdmac - 1).mean() >= 0.3

    def test_delay_no_worse_from_load_4(self, protocol_sweep):
        """Test that MPMH's mean delay never exceeds FDMAC's from load 4 up."""
        mpmh = mean_by_load(protocol_sweep, "mpmh", "avg_delay").loc[4:]
        fdmac = mean_by_load(protocol_sweep, "fdmac", "avg_delay").loc[4:]
        assert (mpmh <= fdmac).all()

    def test_uniform_rate_saturates_first(self, protocol_sweep):
        """Test that FDMAC-UR's throughput flattens at a lower load than FDMAC's."""
        uniform = saturation_load(mean_by_load(protocol_sweep, "fdmac-ur", "throughput"))
        assert uniform < saturation_load(mean_by_load(protocol_sweep, "fdmac", "throughput"))


@pytest.mark.slow
def test_hop_limit_study():
    """Test that a hop limit of 3 matches or beats 2 from load 6 up."""
    scenario = validate_and_load("ten-node")
    table = sweep(scenario, range(6, 11), ["mpmh"], range(10), h_max_values=[2, 3], workers=4).aggregate
    by_limit = table.set_index(["h_max", "load"])["throughput_mean"]
    assert (by_limit.loc[3] >= by_limit.loc[2]).all()


@pytest.mark.slow
def test_oracle_gap_at_highest_load():
    """Test the heuristic's flow delay and throughput gap to the oracle at load 5."""
    scenario = validate_and_load("single-flow")
    table = sweep(scenario, [5.0], ["mpmh", "oracle"], range(10)).aggregate.set_index("scheduler")
    delay = table["flow_delay_mean"]
    throughput = table["flow_throughput_mean"]
    assert (delay["mpmh"] - delay["oracle"]) / delay["oracle"] <= 0.12
    assert (throughput["oracle"] - throughput["mpmh"]) / throughput["oracle"] <= 0.10
