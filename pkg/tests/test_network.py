import math

import pytest

from mpmh_cli.errors import ConfigurationError, TopologyError
from mpmh_cli.network import (
    DistanceQuantizer,
    Flow,
    Link,
    Node,
    Path,
    PathSet,
    SnrQuantizer,
    Topology,
    adjacent,
    demand_intensity_update,
    direct_rate,
    generate_topology,
    is_matching,
    node_names,
    rate_from_distance,
)
from mpmh_cli.radio import RadioModel


@pytest.fixture
def line():
    """Three nodes on a line with symmetric rates."""
    nodes = (Node("A", 0.0, 0.0, True), Node("B", 1.0, 0.0), Node("C", 2.0, 0.0))
    rates = {Link("A", "B"): 3, Link("B", "A"): 3, Link("B", "C"): 2, Link("C", "B"): 2}
    return Topology(nodes, rates)


class TestLinks:
    """Tests for link adjacency and matchings."""

    def test_adjacent_shares_endpoint(self):
        """Test that links sharing any endpoint are adjacent."""
        assert adjacent(Link("A", "B"), Link("B", "C"))
        assert adjacent(Link("A", "B"), Link("C", "A"))
        assert not adjacent(Link("A", "B"), Link("C", "D"))

    def test_is_matching(self):
        """Test matching detection on disjoint and overlapping sets."""
        assert is_matching([Link("A", "B"), Link("C", "D")])
        assert not is_matching([Link("A", "B"), Link("B", "C")])

    def test_link_str(self):
        """Test the arrow form used in schedules."""
        assert str(Link("A", "B")) == "A->B"


class TestTopology:
    """Tests for topology validation and queries."""

    def test_duplicate_ids_rejected(self):
        """Test that node ids must be unique."""
        with pytest.raises(TopologyError):
            Topology((Node("A", 0, 0, True), Node("A", 1, 0)))

    def test_exactly_one_pnc(self):
        """Test that a WPAN has one piconet coordinator."""
        with pytest.raises(TopologyError):
            Topology((Node("A", 0, 0, True), Node("B", 1, 0, True)))
        with pytest.raises(TopologyError):
            Topology((Node("A", 0, 0), Node("B", 1, 0)))

    def test_colocated_nodes_rejected(self):
        """Test that two nodes cannot share a position."""
        with pytest.raises(TopologyError):
            Topology((Node("A", 0, 0, True), Node("B", 0, 0)))

    def test_unknown_link_endpoint(self):
        """Test that links must reference known nodes."""
        with pytest.raises(TopologyError):
            Topology((Node("A", 0, 0, True), Node("B", 1, 0)), {Link("A", "Z"): 1})

    def test_rate_outside_alphabet(self):
        """Test that rates must come from the alphabet."""
        with pytest.raises(ConfigurationError):
            Topology((Node("A", 0, 0, True), Node("B", 1, 0)), {Link("A", "B"): 5})

    def test_links_are_sorted_and_unblocked(self, line):
        """Test that links() skips blocked links and is deterministic."""
        blocked = line.with_blocked([Link("B", "C")])
        assert list(blocked.links()) == [Link("A", "B"), Link("B", "A"), Link("C", "B")]
        assert blocked.rate("B", "C") == 0

    def test_blocking_unknown_node(self, line):
        """Test that a blocked link must join known nodes."""
        with pytest.raises(TopologyError):
            line.with_blocked([Link("B", "Z")])

    def test_missing_link_has_rate_zero(self, line):
        """Test that an absent pair is blocked."""
        assert line.rate("A", "C") == 0

    def test_neighbors(self, line):
        """Test outgoing neighbours with their rates."""
        assert line.neighbors("B") == [("A", 3), ("C", 2)]

    def test_uniform_copy(self, line):
        """Test that every usable link gets the one rate."""
        uniform = line.uniform_copy(1)
        assert set(uniform.link_rate.values()) == {1}
        assert uniform.rate_alphabet == (1,)

    def test_distance_and_pnc(self, line):
        """Test geometry helpers."""
        assert line.distance("A", "C") == pytest.approx(2.0)
        assert line.pnc.id == "A"
        assert line.n == 3


class TestQuantizers:
    """Tests for distance and SNR rate quantization."""

    def test_arena_edges(self):
        """Test that edges are quarters of the arena diagonal."""
        quantizer = DistanceQuantizer.for_arena(8.0)
        diagonal = 8.0 * math.sqrt(2)
        assert quantizer.edges_m == pytest.approx(tuple(diagonal * k / 4 for k in (1, 2, 3, 4)))
        assert quantizer(RadioModel(), 1.0) == 4
        assert quantizer(RadioModel(), diagonal) == 1
        assert quantizer(RadioModel(), diagonal * 1.01) == 0

    def test_edges_must_increase(self):
        """Test that non-monotone edges are refused."""
        with pytest.raises(ConfigurationError):
            DistanceQuantizer((2.0, 1.0), (4, 3))

    def test_in_arena_rates_are_in_alphabet(self):
        """Test that any placement inside the arena gives rates in {1,2,3,4}."""
        for seed in range(5):
            topology = generate_topology(10, 8.0, seed)
            rated = rate_from_distance(RadioModel(), topology, DistanceQuantizer.for_arena(8.0))
            assert set(rated.link_rate.values()) <= {1, 2, 3, 4}
            assert len(rated.link_rate) == 10 * 9

    def test_rates_are_symmetric(self):
        """Test that both directions get the same rate."""
        topology = rate_from_distance(RadioModel(), generate_topology(6, 8.0, 3), DistanceQuantizer.for_arena(8.0))
        for (a, b), rate in topology.link_rate.items():
            assert topology.rate(b, a) == rate

    def test_snr_quantizer_picks_highest_met_rate(self):
        """Test that a short link reaches the top of the table."""
        model = RadioModel()
        assert SnrQuantizer()(model, 1.0) == 4
        assert SnrQuantizer()(model, 1e6) == 0


class TestGeneration:
    """Tests for random placement."""

    def test_seed_is_reproducible(self):
        """Test that the same seed gives the same nodes."""
        assert generate_topology(8, 8.0, 42).nodes == generate_topology(8, 8.0, 42).nodes
        assert generate_topology(8, 8.0, 42).nodes != generate_topology(8, 8.0, 43).nodes

    def test_first_node_is_pnc(self):
        """Test that node 0 coordinates the piconet."""
        topology = generate_topology(5, 8.0, 1)
        assert topology.pnc.id == "A"
        assert all(0.0 <= n.x <= 8.0 and 0.0 <= n.y <= 8.0 for n in topology.nodes)

    def test_too_few_nodes(self):
        """Test that a single node is not a network."""
        with pytest.raises(TopologyError):
            generate_topology(1, 8.0, 0)

    def test_node_names_switch_format_beyond_alphabet(self):
        """Test letter ids up to 26 nodes, numbered ids beyond."""
        assert node_names(3) == ["A", "B", "C"]
        assert node_names(30)[0] == "n00"


class TestFlowsAndPaths:
    """Tests for flows, paths and path sets."""

    def test_flow_endpoints_differ(self):
        """Test that a flow cannot loop on one node."""
        with pytest.raises(TopologyError):
            Flow(0, "A", "A")

    def test_direct_rate(self, line):
        """Test c_v on present and absent direct links."""
        assert direct_rate(line, Flow(0, "A", "B")) == 3
        assert direct_rate(line, Flow(1, "A", "C")) == 0

    def test_demand_intensity_ema(self):
        """Test the moving-average update of the arrival rate."""
        flow = Flow(0, "A", "B", demand_intensity=0.5)
        assert demand_intensity_update(flow, 10, 10, alpha=0.5) == pytest.approx(0.75)
        with pytest.raises(ValueError):
            demand_intensity_update(flow, 1, 0)

    def test_path_from_nodes(self, line):
        """Test building a path and its bottleneck."""
        path = Path.from_nodes(line, "ABC")
        assert path.hops == (Link("A", "B"), Link("B", "C"))
        assert path.bottleneck_rate == 2
        assert path.bottleneck_hop == Link("B", "C")
        assert path.label == "A-B-C"

    def test_bottleneck_tie_takes_earliest(self):
        """Test that equal minimum rates resolve to the first hop."""
        path = Path((Link("A", "B"), Link("B", "C")), (2, 2))
        assert path.bottleneck_index == 0

    def test_path_must_chain(self):
        """Test that consecutive hops share a node."""
        with pytest.raises(TopologyError):
            Path((Link("A", "B"), Link("C", "D")), (1, 1))

    def test_path_without_loops(self):
        """Test that a node is visited once."""
        with pytest.raises(TopologyError):
            Path((Link("A", "B"), Link("B", "A")), (1, 1))

    def test_path_through_blocked_hop(self, line):
        """Test that a blocked hop cannot be part of a path."""
        with pytest.raises(TopologyError):
            Path.from_nodes(line, "AC")

    def test_path_set_hop_disjoint(self, line):
        """Test that two paths of one flow may not share a hop."""
        path = Path.from_nodes(line, "AB")
        with pytest.raises(TopologyError):
            PathSet(0, (path, path), (1, 1))

    def test_path_set_check(self, line):
        """Test demand and path-count checks."""
        path_set = PathSet(0, (Path.from_nodes(line, "AB"),), (5,))
        path_set.check(5, line.n)
        with pytest.raises(ValueError):
            path_set.check(6, line.n)

    def test_without_empty(self, line):
        """Test dropping zero-demand paths."""
        ab, bc = Path.from_nodes(line, "AB"), Path.from_nodes(line, "BC")
        trimmed = PathSet(0, (ab, bc), (4, 0)).without_empty()
        assert trimmed.paths == (ab,)
        assert trimmed.split == (4,)
