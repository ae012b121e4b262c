import random

import pytest

from undergrid.errors import IntegrityError, NotFoundError, ValidationError
from undergrid.model import (
    Edge,
    Node,
    Point2D,
    add_edge,
    add_node,
    apply_edit,
    end_nodes,
    inverse_batch,
    modify_node,
    node_degree,
    remove_edge,
    remove_node,
)

from conftest import make_network, put_cycle, put_edge, put_node


def test_point_requires_finite_coordinates():
    with pytest.raises(ValidationError):
        Point2D(float("nan"), 0.0)
    with pytest.raises(ValidationError):
        Point2D(0.0, float("inf"))


def test_degree_isolated_node_is_zero(pipes_network):
    put_node(pipes_network, "a", 0, 0)
    assert node_degree(pipes_network, "a") == 0


def test_degree_two_distinct_neighbors(pipes_network):
    put_node(pipes_network, "a", 0, 0)
    put_node(pipes_network, "b", 1, 0)
    put_node(pipes_network, "c", 0, 1)
    put_edge(pipes_network, "e1", "a", "b")
    put_edge(pipes_network, "e2", "a", "c")
    assert node_degree(pipes_network, "a") == 2


def test_degree_in_twelve_node_cycle(pipes_network):
    node_ids, _ = put_cycle(pipes_network, "c", (0, 0), 5.0, 12)
    # oracle: count incident edges by scanning the edge table
    for nid in node_ids:
        scan = sum(
            1 for e in pipes_network.edges.values() if nid in (e.endpoint_a, e.endpoint_b)
        )
        assert scan == 2
        assert node_degree(pipes_network, nid) == 2


def test_degree_unknown_node(pipes_network):
    with pytest.raises(NotFoundError):
        node_degree(pipes_network, "ghost")


def test_end_nodes_single_edge(pipes_network):
    put_node(pipes_network, "a", 0, 0)
    put_node(pipes_network, "b", 1, 0)
    put_edge(pipes_network, "e", "a", "b")
    assert end_nodes(pipes_network, "pipes") == ["a", "b"]


def test_end_nodes_triangle_empty(pipes_network):
    put_cycle(pipes_network, "t", (0, 0), 1.0, 3)
    assert end_nodes(pipes_network, "pipes") == []


def test_end_nodes_path():
    network = make_network()
    for nid, x in (("a", 0), ("b", 1), ("c", 2)):
        put_node(network, nid, x, 0)
    put_edge(network, "e1", "a", "b")
    put_edge(network, "e2", "b", "c")
    # oracle: brute-force degree count
    degrees = {}
    for e in network.edges.values():
        for nid in (e.endpoint_a, e.endpoint_b):
            degrees[nid] = degrees.get(nid, 0) + 1
    expected = sorted(n for n, d in degrees.items() if d == 1)
    assert end_nodes(network, "pipes") == expected == ["a", "c"]


def test_end_nodes_unknown_layer(pipes_network):
    with pytest.raises(NotFoundError):
        end_nodes(pipes_network, "nope")


def test_apply_edit_commits_and_bumps_revision(pipes_network):
    put_node(pipes_network, "n2", 5, 5)
    batch = [
        add_node(Node("n1", Point2D(0, 0), "pipes")),
        add_edge(Edge("e1", "n1", "n2", "pipes")),
    ]
    before = pipes_network.revision
    revision = apply_edit(pipes_network, batch)
    assert revision == before + 1
    assert "n1" in pipes_network.nodes and "e1" in pipes_network.edges


def test_apply_edit_rejects_edge_to_missing_node(pipes_network):
    put_node(pipes_network, "a", 0, 0)
    snapshot = pipes_network.serialize()
    with pytest.raises(IntegrityError) as err:
        apply_edit(pipes_network, [add_edge(Edge("e", "a", "ghost", "pipes"))])
    assert err.value.action_index == 0
    assert pipes_network.revision == 0
    assert pipes_network.serialize() == snapshot


def test_remove_node_with_incident_edges_needs_edge_removal_first(pipes_network):
    put_node(pipes_network, "hub", 0, 0)
    put_node(pipes_network, "x", 1, 0)
    put_node(pipes_network, "y", 0, 1)
    put_edge(pipes_network, "e1", "hub", "x")
    put_edge(pipes_network, "e2", "hub", "y")
    snapshot = pipes_network.serialize()

    with pytest.raises(IntegrityError):
        apply_edit(pipes_network, [remove_node("hub")])
    assert pipes_network.serialize() == snapshot

    apply_edit(pipes_network, [remove_edge("e1"), remove_edge("e2"), remove_node("hub")])
    assert "hub" not in pipes_network.nodes


def test_apply_edit_rejects_self_loop(pipes_network):
    put_node(pipes_network, "a", 0, 0)
    with pytest.raises(IntegrityError):
        apply_edit(pipes_network, [add_edge(Edge("e", "a", "a", "pipes"))])


def test_failing_batch_is_atomic_mid_batch(pipes_network):
    put_node(pipes_network, "a", 0, 0)
    snapshot = pipes_network.serialize()
    batch = [
        add_node(Node("b", Point2D(1, 0), "pipes")),
        add_edge(Edge("e", "a", "b", "pipes")),
        remove_node("a"),  # fails: edge e still incident
    ]
    with pytest.raises(IntegrityError) as err:
        apply_edit(pipes_network, batch)
    assert err.value.action_index == 2
    assert pipes_network.serialize() == snapshot


def test_degree_sum_equals_twice_edge_count_randomized():
    rng = random.Random(7)
    for _ in range(25):
        network = make_network()
        count = rng.randint(2, 30)
        for i in range(count):
            put_node(network, f"n{i}", rng.uniform(0, 100), rng.uniform(0, 100))
        edges = 0
        for i in range(rng.randint(0, 60)):
            a, b = rng.sample(range(count), 2)
            put_edge(network, f"e{i}", f"n{a}", f"n{b}")
            edges += 1
        total = sum(node_degree(network, f"n{i}") for i in range(count))
        assert total == 2 * edges


def test_inverse_batch_round_trips(pipes_network):
    put_node(pipes_network, "a", 0, 0, valve="old")
    put_node(pipes_network, "b", 1, 0)
    put_edge(pipes_network, "e", "a", "b")
    snapshot = pipes_network.serialize()
    revision = pipes_network.revision

    batch = [
        modify_node("a", position=Point2D(9, 9), attributes={"valve": "new"}),
        remove_edge("e"),
        add_node(Node("c", Point2D(2, 2), "pipes")),
    ]
    undo = inverse_batch(pipes_network, batch)
    apply_edit(pipes_network, batch)
    apply_edit(pipes_network, undo)
    restored = pipes_network.snapshot()
    restored.revision = revision
    assert restored.serialize() == snapshot


def test_edges_never_span_layers():
    network = make_network(layers=("pipes", "streets"))
    put_node(network, "p", 0, 0, layer="pipes")
    put_node(network, "s", 1, 0, layer="streets")
    with pytest.raises(IntegrityError):
        apply_edit(network, [add_edge(Edge("e", "p", "s", "pipes"))])


def test_snapshot_is_isolated(pipes_network):
    put_node(pipes_network, "a", 0, 0)
    snap = pipes_network.snapshot()
    apply_edit(pipes_network, [add_node(Node("b", Point2D(1, 1), "pipes"))])
    assert "b" in pipes_network.nodes
    assert "b" not in snap.nodes
