import math

import pytest

from undergrid.model import Edge, InfrastructureNetwork, Layer, Node, Point2D


def make_network(epsilon=0.01, layers=("pipes",)):
    kinds = {"pipes": "pipes", "streets": "streets", "buildings": "buildings", "census": "census"}
    network = InfrastructureNetwork(epsilon=epsilon)
    for layer_id in layers:
        network.add_layer(
            Layer(id=layer_id, name=layer_id.title(), kind=kinds.get(layer_id, "other"))
        )
    return network


def put_node(network, node_id, x, y, layer="pipes", **attributes):
    node = Node(id=node_id, position=Point2D(x, y), layer_id=layer, attributes=dict(attributes))
    network.insert_node(node)
    return node


def put_edge(network, edge_id, a, b, layer="pipes", **attributes):
    edge = Edge(id=edge_id, endpoint_a=a, endpoint_b=b, layer_id=layer, attributes=dict(attributes))
    network.insert_edge(edge)
    return edge


def put_cycle(network, prefix, center, radius, count, layer="pipes"):
    """Regular polygon of `count` nodes; returns (node ids, edge ids)."""
    node_ids = []
    for k in range(count):
        angle = 2 * math.pi * k / count
        nid = f"{prefix}n{k:02d}"
        put_node(network, nid, center[0] + radius * math.cos(angle), center[1] + radius * math.sin(angle), layer)
        node_ids.append(nid)
    edge_ids = []
    for k in range(count):
        eid = f"{prefix}e{k:02d}"
        put_edge(network, eid, node_ids[k], node_ids[(k + 1) % count], layer)
        edge_ids.append(eid)
    return node_ids, edge_ids


@pytest.fixture
def pipes_network():
    return make_network()
