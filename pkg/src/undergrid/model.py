"""Core network model: layers, nodes, edges and atomic edit batches.

Coordinates are planar, in meters, in a single projected CRS. Geographic
(lon/lat) input is rejected at ingest time; none of the math here is
geodesic.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from .errors import IntegrityError, NotFoundError, ValidationError

LAYER_KINDS = ("pipes", "streets", "buildings", "census", "rail", "other")
SENSITIVITIES = ("public", "sensitive")
TEMPORAL_RESOLUTIONS = ("none", "day", "month", "year")

#: default duplicate/merge tolerance, meters
DEFAULT_EPSILON = 0.01


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError(f"non-finite coordinate ({self.x}, {self.y})")

    def distance_to(self, other: "Point2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass
class Node:
    id: str
    position: Point2D
    layer_id: str
    attributes: dict = field(default_factory=dict)
    flag_ids: list = field(default_factory=list)

    def copy(self) -> "Node":
        return replace(self, attributes=dict(self.attributes), flag_ids=list(self.flag_ids))


@dataclass
class Edge:
    id: str
    endpoint_a: str
    endpoint_b: str
    layer_id: str
    attributes: dict = field(default_factory=dict)
    #: full vertex chain including both endpoint positions, or [] for a
    #: straight segment
    polyline: list = field(default_factory=list)

    def copy(self) -> "Edge":
        return replace(self, attributes=dict(self.attributes), polyline=list(self.polyline))

    def other_endpoint(self, node_id: str) -> str:
        return self.endpoint_b if node_id == self.endpoint_a else self.endpoint_a


@dataclass
class Layer:
    id: str
    name: str
    kind: str = "other"
    sensitivity: str = "public"
    temporal_resolution: str = "none"
    valid_interval: tuple | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValidationError(f"unknown layer kind {self.kind!r}")
        if self.sensitivity not in SENSITIVITIES:
            raise ValidationError(f"unknown sensitivity {self.sensitivity!r}")
        if self.temporal_resolution not in TEMPORAL_RESOLUTIONS:
            raise ValidationError(f"unknown temporal resolution {self.temporal_resolution!r}")


@dataclass
class Footprint:
    """A polygonal feature (building outline, census block, query region)."""

    id: str
    layer_id: str
    geometry: object  # geometry.MultiPolygonGeometry
    attributes: dict = field(default_factory=dict)


def chain_of(edge: Edge, network: "InfrastructureNetwork") -> list[Point2D]:
    """Vertex chain of an edge, falling back to its endpoint positions."""
    if edge.polyline:
        return list(edge.polyline)
    a = network.nodes[edge.endpoint_a].position
    b = network.nodes[edge.endpoint_b].position
    return [a, b]


# -- edit batches ------------------------------------------------------------

ADD_NODE = "add_node"
REMOVE_NODE = "remove_node"
MODIFY_NODE = "modify_node"
ADD_EDGE = "add_edge"
REMOVE_EDGE = "remove_edge"
MODIFY_EDGE = "modify_edge"


@dataclass
class EditAction:
    kind: str
    node: Node | None = None
    edge: Edge | None = None
    target_id: str | None = None
    #: for modify actions: replacement field values
    position: Point2D | None = None
    attributes: dict | None = None
    endpoint_a: str | None = None
    endpoint_b: str | None = None
    polyline: list | None = None


def add_node(node: Node) -> EditAction:
    return EditAction(ADD_NODE, node=node)


def remove_node(node_id: str) -> EditAction:
    return EditAction(REMOVE_NODE, target_id=node_id)


def modify_node(node_id: str, position=None, attributes=None) -> EditAction:
    return EditAction(MODIFY_NODE, target_id=node_id, position=position, attributes=attributes)


def add_edge(edge: Edge) -> EditAction:
    return EditAction(ADD_EDGE, edge=edge)


def remove_edge(edge_id: str) -> EditAction:
    return EditAction(REMOVE_EDGE, target_id=edge_id)


def modify_edge(edge_id: str, endpoint_a=None, endpoint_b=None, attributes=None, polyline=None) -> EditAction:
    return EditAction(
        MODIFY_EDGE,
        target_id=edge_id,
        endpoint_a=endpoint_a,
        endpoint_b=endpoint_b,
        attributes=attributes,
        polyline=polyline,
    )


class InfrastructureNetwork:
    """Multi-layer planar graph with atomic, revisioned edits.

    Edits go through :func:`apply_edit` only; a failing batch leaves the
    network exactly as it was. Readers that need a stable view across a
    writer take :meth:`snapshot`.
    """

    def __init__(self, epsilon: float = DEFAULT_EPSILON):
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.layers: dict[str, Layer] = {}
        self.nodes: dict[str, Node] = {}
        self.edges: dict[str, Edge] = {}
        self.footprints: dict[str, Footprint] = {}
        self.epsilon = epsilon
        self.revision = 0
        self._node_seq = 0
        self._edge_seq = 0
        # node id -> set of incident edge ids, kept in sync by commits
        self._incidence: dict[str, set] = {}

    # -- id allocation -------------------------------------------------------

    def allocate_node_id(self) -> str:
        self._node_seq += 1
        while f"n{self._node_seq}" in self.nodes:
            self._node_seq += 1
        return f"n{self._node_seq}"

    def allocate_edge_id(self) -> str:
        self._edge_seq += 1
        while f"e{self._edge_seq}" in self.edges:
            self._edge_seq += 1
        return f"e{self._edge_seq}"

    # -- accessors -------------------------------------------------------------

    def layer(self, layer_id: str) -> Layer:
        try:
            return self.layers[layer_id]
        except KeyError:
            raise NotFoundError(f"unknown layer {layer_id!r}") from None

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise NotFoundError(f"unknown node {node_id!r}") from None

    def edge(self, edge_id: str) -> Edge:
        try:
            return self.edges[edge_id]
        except KeyError:
            raise NotFoundError(f"unknown edge {edge_id!r}") from None

    def add_layer(self, layer: Layer) -> None:
        if layer.id in self.layers:
            raise ValidationError(f"duplicate layer id {layer.id!r}")
        self.layers[layer.id] = layer

    def incident_edges(self, node_id: str) -> list[str]:
        return sorted(self._incidence.get(node_id, ()))

    def layer_nodes(self, layer_id: str) -> list[Node]:
        self.layer(layer_id)
        return [n for n in self.nodes.values() if n.layer_id == layer_id]

    def layer_edges(self, layer_id: str) -> list[Edge]:
        self.layer(layer_id)
        return [e for e in self.edges.values() if e.layer_id == layer_id]

    def layer_footprints(self, layer_id: str) -> list[Footprint]:
        self.layer(layer_id)
        return [f for f in self.footprints.values() if f.layer_id == layer_id]

    def neighbors(self, node_id: str) -> set:
        self.node(node_id)
        out = set()
        for eid in self._incidence.get(node_id, ()):
            out.add(self.edges[eid].other_endpoint(node_id))
        return out

    # -- load-time inserts (no revision bump; loaders only) -------------------

    def insert_node(self, node: Node) -> None:
        if node.id in self.nodes:
            raise ValidationError(f"duplicate node id {node.id!r}")
        if node.layer_id not in self.layers:
            raise NotFoundError(f"unknown layer {node.layer_id!r}")
        self.nodes[node.id] = node

    def insert_edge(self, edge: Edge) -> None:
        if edge.id in self.edges:
            raise ValidationError(f"duplicate edge id {edge.id!r}")
        for end in (edge.endpoint_a, edge.endpoint_b):
            if end not in self.nodes:
                raise IntegrityError(f"edge {edge.id!r} references missing node {end!r}")
        if edge.endpoint_a == edge.endpoint_b:
            raise IntegrityError(f"edge {edge.id!r} is a self-loop")
        self.edges[edge.id] = edge
        self._incidence.setdefault(edge.endpoint_a, set()).add(edge.id)
        self._incidence.setdefault(edge.endpoint_b, set()).add(edge.id)

    def drop_edge(self, edge_id: str) -> Edge:
        edge = self.edge(edge_id)
        for end in (edge.endpoint_a, edge.endpoint_b):
            bucket = self._incidence.get(end)
            if bucket:
                bucket.discard(edge_id)
        del self.edges[edge_id]
        return edge

    def insert_footprint(self, footprint: Footprint) -> None:
        if footprint.id in self.footprints:
            raise ValidationError(f"duplicate footprint id {footprint.id!r}")
        if footprint.layer_id not in self.layers:
            raise NotFoundError(f"unknown layer {footprint.layer_id!r}")
        self.footprints[footprint.id] = footprint

    # -- serialization (canonical form used for equality checks) -------------

    def canonical_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "revision": self.revision,
            "layers": {
                lid: {
                    "name": l.name,
                    "kind": l.kind,
                    "sensitivity": l.sensitivity,
                    "temporal_resolution": l.temporal_resolution,
                    "valid_interval": list(l.valid_interval) if l.valid_interval else None,
                }
                for lid, l in sorted(self.layers.items())
            },
            "nodes": {
                nid: {
                    "pos": [n.position.x, n.position.y],
                    "layer": n.layer_id,
                    "attributes": dict(sorted(n.attributes.items())),
                    "flags": sorted(n.flag_ids),
                }
                for nid, n in sorted(self.nodes.items())
            },
            "edges": {
                eid: {
                    "a": e.endpoint_a,
                    "b": e.endpoint_b,
                    "layer": e.layer_id,
                    "attributes": dict(sorted(e.attributes.items())),
                    "polyline": [[p.x, p.y] for p in e.polyline],
                }
                for eid, e in sorted(self.edges.items())
            },
            "footprints": {
                fid: {
                    "layer": f.layer_id,
                    "rings": f.geometry.canonical_rings(),
                    "attributes": dict(sorted(f.attributes.items())),
                }
                for fid, f in sorted(self.footprints.items())
            },
        }

    def serialize(self) -> str:
        return json.dumps(self.canonical_dict(), sort_keys=True)

    def snapshot(self) -> "InfrastructureNetwork":
        """Deep, independent copy; readers keep it across later commits."""
        twin = InfrastructureNetwork(epsilon=self.epsilon)
        twin.layers = dict(self.layers)
        twin.nodes = {nid: n.copy() for nid, n in self.nodes.items()}
        twin.edges = {eid: e.copy() for eid, e in self.edges.items()}
        twin.footprints = dict(self.footprints)
        twin.revision = self.revision
        twin._node_seq = self._node_seq
        twin._edge_seq = self._edge_seq
        twin._incidence = {nid: set(s) for nid, s in self._incidence.items()}
        return twin

    # -- integrity -------------------------------------------------------------

    def check_integrity(self) -> None:
        """Raise if any referential constraint is broken. Used after commits."""
        for node in self.nodes.values():
            if node.layer_id not in self.layers:
                raise IntegrityError(f"node {node.id} references missing layer {node.layer_id}")
        for edge in self.edges.values():
            for end in (edge.endpoint_a, edge.endpoint_b):
                if end not in self.nodes:
                    raise IntegrityError(f"edge {edge.id} references missing node {end}")
            if edge.endpoint_a == edge.endpoint_b:
                raise IntegrityError(f"edge {edge.id} is a self-loop")
            if edge.layer_id not in self.layers:
                raise IntegrityError(f"edge {edge.id} references missing layer {edge.layer_id}")
            if edge.polyline:
                for vertex, end in (
                    (edge.polyline[0], edge.endpoint_a),
                    (edge.polyline[-1], edge.endpoint_b),
                ):
                    if vertex.distance_to(self.nodes[end].position) > self.epsilon:
                        raise IntegrityError(
                            f"edge {edge.id} polyline boundary does not meet endpoint {end}"
                        )


def node_degree(network: InfrastructureNetwork, node_id: str) -> int:
    """Number of same-layer edges incident to the node."""
    network.node(node_id)
    return len(network._incidence.get(node_id, ()))


def end_nodes(network: InfrastructureNetwork, layer_id: str) -> list[str]:
    """Ids of the layer's degree-1 nodes, id-sorted."""
    network.layer(layer_id)
    return sorted(
        n.id for n in network.nodes.values()
        if n.layer_id == layer_id and node_degree(network, n.id) == 1
    )


def apply_edit(network: InfrastructureNetwork, batch: list[EditAction]) -> int:
    """Apply an edit batch atomically; returns the new revision.

    Actions are validated in order against a staged copy of the graph, so a
    batch may remove a node only after the same batch removed its incident
    edges. Any violation rejects the whole batch (IntegrityError naming the
    first bad action) and the network is left untouched.
    """
    staged_nodes = dict(network.nodes)
    staged_edges = dict(network.edges)
    staged_incidence = {nid: set(s) for nid, s in network._incidence.items()}

    def incidence_add(eid, edge):
        staged_incidence.setdefault(edge.endpoint_a, set()).add(eid)
        staged_incidence.setdefault(edge.endpoint_b, set()).add(eid)

    def incidence_drop(eid, edge):
        for end in (edge.endpoint_a, edge.endpoint_b):
            bucket = staged_incidence.get(end)
            if bucket:
                bucket.discard(eid)

    for index, action in enumerate(batch):
        try:
            if action.kind == ADD_NODE:
                node = action.node
                if node is None:
                    raise IntegrityError("add_node without a node")
                if node.id in staged_nodes:
                    raise IntegrityError(f"node id {node.id!r} already present")
                if node.layer_id not in network.layers:
                    raise IntegrityError(f"node {node.id!r} references missing layer {node.layer_id!r}")
                staged_nodes[node.id] = node.copy()
            elif action.kind == REMOVE_NODE:
                nid = action.target_id
                if nid not in staged_nodes:
                    raise IntegrityError(f"cannot remove missing node {nid!r}")
                if staged_incidence.get(nid):
                    raise IntegrityError(
                        f"node {nid!r} still has incident edges {sorted(staged_incidence[nid])}"
                    )
                del staged_nodes[nid]
                staged_incidence.pop(nid, None)
            elif action.kind == MODIFY_NODE:
                nid = action.target_id
                if nid not in staged_nodes:
                    raise IntegrityError(f"cannot modify missing node {nid!r}")
                node = staged_nodes[nid].copy()
                if action.position is not None:
                    node.position = action.position
                if action.attributes is not None:
                    node.attributes = dict(action.attributes)
                staged_nodes[nid] = node
            elif action.kind == ADD_EDGE:
                edge = action.edge
                if edge is None:
                    raise IntegrityError("add_edge without an edge")
                if edge.id in staged_edges:
                    raise IntegrityError(f"edge id {edge.id!r} already present")
                for end in (edge.endpoint_a, edge.endpoint_b):
                    if end not in staged_nodes:
                        raise IntegrityError(f"edge {edge.id!r} references missing node {end!r}")
                if edge.endpoint_a == edge.endpoint_b:
                    raise IntegrityError(f"edge {edge.id!r} is a self-loop")
                if edge.layer_id not in network.layers:
                    raise IntegrityError(f"edge {edge.id!r} references missing layer {edge.layer_id!r}")
                staged_edges[edge.id] = edge.copy()
                incidence_add(edge.id, edge)
            elif action.kind == REMOVE_EDGE:
                eid = action.target_id
                if eid not in staged_edges:
                    raise IntegrityError(f"cannot remove missing edge {eid!r}")
                incidence_drop(eid, staged_edges[eid])
                del staged_edges[eid]
            elif action.kind == MODIFY_EDGE:
                eid = action.target_id
                if eid not in staged_edges:
                    raise IntegrityError(f"cannot modify missing edge {eid!r}")
                edge = staged_edges[eid].copy()
                incidence_drop(eid, edge)
                if action.endpoint_a is not None:
                    edge.endpoint_a = action.endpoint_a
                if action.endpoint_b is not None:
                    edge.endpoint_b = action.endpoint_b
                if action.attributes is not None:
                    edge.attributes = dict(action.attributes)
                if action.polyline is not None:
                    edge.polyline = list(action.polyline)
                for end in (edge.endpoint_a, edge.endpoint_b):
                    if end not in staged_nodes:
                        raise IntegrityError(f"edge {eid!r} re-pointed to missing node {end!r}")
                if edge.endpoint_a == edge.endpoint_b:
                    raise IntegrityError(f"edge {eid!r} would become a self-loop")
                staged_edges[eid] = edge
                incidence_add(eid, edge)
            else:
                raise IntegrityError(f"unknown action kind {action.kind!r}")
        except IntegrityError as exc:
            if exc.action_index is None:
                exc.action_index = index
            raise

    # endpoint layers must agree with edge layer (edges never span layers)
    for edge in staged_edges.values():
        for end in (edge.endpoint_a, edge.endpoint_b):
            if staged_nodes[end].layer_id != edge.layer_id:
                raise IntegrityError(
                    f"edge {edge.id!r} in layer {edge.layer_id!r} touches node {end!r} "
                    f"of layer {staged_nodes[end].layer_id!r}"
                )

    network.nodes = staged_nodes
    network.edges = staged_edges
    network._incidence = staged_incidence
    network.revision += 1
    return network.revision


def action_to_dict(action: EditAction) -> dict:
    out = {"kind": action.kind}
    if action.node is not None:
        out["node"] = {
            "id": action.node.id,
            "position": [action.node.position.x, action.node.position.y],
            "layer_id": action.node.layer_id,
            "attributes": dict(action.node.attributes),
            "flag_ids": list(action.node.flag_ids),
        }
    if action.edge is not None:
        out["edge"] = {
            "id": action.edge.id,
            "endpoint_a": action.edge.endpoint_a,
            "endpoint_b": action.edge.endpoint_b,
            "layer_id": action.edge.layer_id,
            "attributes": dict(action.edge.attributes),
            "polyline": [[p.x, p.y] for p in action.edge.polyline],
        }
    for field_name in ("target_id", "endpoint_a", "endpoint_b"):
        value = getattr(action, field_name)
        if value is not None:
            out[field_name] = value
    if action.position is not None:
        out["position"] = [action.position.x, action.position.y]
    if action.attributes is not None:
        out["attributes"] = dict(action.attributes)
    if action.polyline is not None:
        out["polyline"] = [[p.x, p.y] for p in action.polyline]
    return out


def action_from_dict(data: dict) -> EditAction:
    node = None
    if "node" in data:
        n = data["node"]
        node = Node(
            id=n["id"],
            position=Point2D(n["position"][0], n["position"][1]),
            layer_id=n["layer_id"],
            attributes=dict(n.get("attributes", {})),
            flag_ids=list(n.get("flag_ids", [])),
        )
    edge = None
    if "edge" in data:
        e = data["edge"]
        edge = Edge(
            id=e["id"],
            endpoint_a=e["endpoint_a"],
            endpoint_b=e["endpoint_b"],
            layer_id=e["layer_id"],
            attributes=dict(e.get("attributes", {})),
            polyline=[Point2D(p[0], p[1]) for p in e.get("polyline", [])],
        )
    return EditAction(
        kind=data["kind"],
        node=node,
        edge=edge,
        target_id=data.get("target_id"),
        position=Point2D(*data["position"]) if data.get("position") else None,
        attributes=data.get("attributes"),
        endpoint_a=data.get("endpoint_a"),
        endpoint_b=data.get("endpoint_b"),
        polyline=[Point2D(p[0], p[1]) for p in data["polyline"]] if data.get("polyline") is not None else None,
    )


def inverse_batch(network: InfrastructureNetwork, batch: list[EditAction]) -> list[EditAction]:
    """Batch that undoes ``batch`` if applied to the current network state.

    Must be computed BEFORE the batch is applied.
    """
    inverse: list[EditAction] = []
    staged_removed_nodes: dict[str, Node] = {}
    staged_removed_edges: dict[str, Edge] = {}
    for action in batch:
        if action.kind == ADD_NODE:
            inverse.append(remove_node(action.node.id))
        elif action.kind == REMOVE_NODE:
            node = staged_removed_nodes.get(action.target_id) or network.node(action.target_id)
            inverse.append(add_node(node.copy()))
            staged_removed_nodes[action.target_id] = node
        elif action.kind == MODIFY_NODE:
            node = network.node(action.target_id)
            inverse.append(modify_node(node.id, position=node.position, attributes=dict(node.attributes)))
        elif action.kind == ADD_EDGE:
            inverse.append(remove_edge(action.edge.id))
        elif action.kind == REMOVE_EDGE:
            edge = staged_removed_edges.get(action.target_id) or network.edge(action.target_id)
            inverse.append(add_edge(edge.copy()))
            staged_removed_edges[action.target_id] = edge
        elif action.kind == MODIFY_EDGE:
            edge = network.edge(action.target_id)
            inverse.append(
                modify_edge(
                    edge.id,
                    endpoint_a=edge.endpoint_a,
                    endpoint_b=edge.endpoint_b,
                    attributes=dict(edge.attributes),
                    polyline=list(edge.polyline),
                )
            )
        else:
            raise IntegrityError(f"unknown action kind {action.kind!r}")
    inverse.reverse()
    return inverse
