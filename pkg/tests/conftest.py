import logging
from dataclasses import replace

import pytest

from mpmh_cli.config import validate_and_load
from mpmh_cli.mpmh import distribute_traffic, schedule_transmissions, select_paths
from mpmh_cli.network import PathSet


@pytest.fixture(autouse=True)
def reset_package_logger():
    """Undo configure_logging so caplog sees records in every test."""
    yield
    logger = logging.getLogger("mpmh_cli")
    logger.handlers.clear()
    logger.propagate = True
    logger.setLevel(logging.NOTSET)


@pytest.fixture
def fig1b():
    """The six-node worked example: one A->B flow of 18 packets."""
    return validate_and_load("fig1b")


@pytest.fixture
def fig1b_path_sets(fig1b):
    """Selected paths of the worked example with the proportional split."""
    flow = fig1b.nominal_flows(static=True)[0]
    paths = tuple(select_paths(fig1b.topology, flow, fig1b.mpmh.h_max))
    return [PathSet(flow.id, paths, distribute_traffic(paths, flow.demand_pkts))]


@pytest.fixture
def fig1b_schedule(fig1b, fig1b_path_sets):
    return schedule_transmissions(fig1b_path_sets, fig1b.topology, fig1b.radio, fig1b.mpmh)


def shortened(scenario, length_slots, delay_threshold_slots=None):
    """Same scenario with a shorter simulated horizon."""
    sim = replace(
        scenario.sim,
        length_slots=length_slots,
        delay_threshold_slots=delay_threshold_slots or max(1, length_slots // 2),
    )
    return replace(scenario, sim=sim)


@pytest.fixture
def shorten():
    return shortened
