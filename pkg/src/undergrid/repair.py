"""Rule-based error detection and context-aware repair with human validation.

Every automated change is recorded as a RepairSuggestion linked to one or
more Flags. Applying a suggestion mutates the network but leaves its
flags open; a human decision (resolve_flag) either keeps the change
(accepted) or reverts it (rejected). Rejected suggestions are retained so
re-running detection does not resurrect them.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from .errors import AuthorizationError, ConflictError, NotFoundError, ValidationError
from . import geometry
from .model import (
    Edge,
    InfrastructureNetwork,
    Node,
    Point2D,
    action_from_dict,
    action_to_dict,
    add_edge,
    add_node,
    apply_edit,
    inverse_batch,
    modify_edge,
    modify_node,
    node_degree,
    remove_edge,
    remove_node,
)

RULES = (
    "duplicate_nodes",
    "symbol_circle",
    "dangling_end",
    "valve_degree",
    "open_boundary",
    "inferred_edge",
    "manual",
)
ACTIONS = ("merge_nodes", "replace_symbol", "add_edge", "connect_boundary")
LEDGER_VERSION = 1

RESOLVER_ROLES = ("crew", "admin")

# detection defaults; all configurable per call
SYMBOL_MIN_NODES = 6
SYMBOL_RADIAL_TOLERANCE = 0.05
SYMBOL_MAX_RADIUS = 3.0
INFER_SEARCH_RADIUS = 50.0
INFER_CORRIDOR_HALF_WIDTH = 8.0
CORRIDOR_SAMPLE_SPACING = 1.0


@dataclass
class Flag:
    id: str
    target: str
    rule: str
    status: str = "open"  # open | accepted | rejected
    detail: str = ""
    suggestion_id: str | None = None
    created_rev: int = 0
    key: str = ""
    resolved_by: str | None = None
    resolved_at: float | None = None


@dataclass
class RepairSuggestion:
    id: str
    action: str
    payload: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    applied: bool = False
    undo: list = field(default_factory=list)  # serialized inverse batch
    created_entity_ids: list = field(default_factory=list)


class FlagLedger:
    """The persistent error ledger: flags, suggestions, commit provenance."""

    def __init__(self):
        self.flags: dict[str, Flag] = {}
        self.suggestions: dict[str, RepairSuggestion] = {}
        self.commit_log: list[dict] = []
        self._flag_seq = 0
        self._suggestion_seq = 0
        self._keys: set[str] = set()

    def add_flag(self, target, rule, detail="", suggestion_id=None, created_rev=0, key="") -> Flag:
        if rule not in RULES:
            raise ValidationError(f"unknown flag rule {rule!r}")
        self._flag_seq += 1
        flag = Flag(
            id=f"f{self._flag_seq}",
            target=target,
            rule=rule,
            detail=detail,
            suggestion_id=suggestion_id,
            created_rev=created_rev,
            key=key,
        )
        self.flags[flag.id] = flag
        if key:
            self._keys.add(key)
        return flag

    def add_suggestion(self, action, payload, provenance) -> RepairSuggestion:
        if action not in ACTIONS:
            raise ValidationError(f"unknown suggestion action {action!r}")
        self._suggestion_seq += 1
        suggestion = RepairSuggestion(
            id=f"s{self._suggestion_seq}",
            action=action,
            payload=payload,
            provenance=provenance,
        )
        self.suggestions[suggestion.id] = suggestion
        return suggestion

    def has_key(self, key: str) -> bool:
        return key in self._keys

    def flag(self, flag_id: str) -> Flag:
        try:
            return self.flags[flag_id]
        except KeyError:
            raise NotFoundError(f"unknown flag {flag_id!r}") from None

    def suggestion(self, suggestion_id: str) -> RepairSuggestion:
        try:
            return self.suggestions[suggestion_id]
        except KeyError:
            raise NotFoundError(f"unknown suggestion {suggestion_id!r}") from None

    def open_flags(self, rule: str | None = None) -> list[Flag]:
        out = [
            f for f in self.flags.values()
            if f.status == "open" and (rule is None or f.rule == rule)
        ]
        return sorted(out, key=lambda f: f.id)

    def flags_for_suggestion(self, suggestion_id: str) -> list[Flag]:
        return sorted(
            (f for f in self.flags.values() if f.suggestion_id == suggestion_id),
            key=lambda f: f.id,
        )

    def flags_for_entity(self, entity_id: str) -> list[Flag]:
        found = {f.id: f for f in self.flags.values() if f.target == entity_id}
        for suggestion in self.suggestions.values():
            if entity_id in suggestion.created_entity_ids:
                for f in self.flags_for_suggestion(suggestion.id):
                    found[f.id] = f
        return sorted(found.values(), key=lambda f: f.id)

    def record_commit(self, revision: int, origin: str, actor: str | None = None) -> None:
        self.commit_log.append({"revision": revision, "origin": origin, "actor": actor})

    # -- persistence -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "ledger_version": LEDGER_VERSION,
            "flags": [vars(f).copy() for f in sorted(self.flags.values(), key=lambda f: f.id)],
            "suggestions": [
                {
                    "id": s.id,
                    "action": s.action,
                    "payload": s.payload,
                    "provenance": s.provenance,
                    "applied": s.applied,
                    "undo": s.undo,
                    "created_entity_ids": s.created_entity_ids,
                }
                for s in sorted(self.suggestions.values(), key=lambda s: s.id)
            ],
            "commit_log": list(self.commit_log),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FlagLedger":
        if data.get("ledger_version") != LEDGER_VERSION:
            raise ValidationError(f"unsupported ledger_version {data.get('ledger_version')!r}")
        ledger = cls()
        for item in data.get("flags", []):
            flag = Flag(**item)
            ledger.flags[flag.id] = flag
            if flag.key:
                ledger._keys.add(flag.key)
            seq = int(flag.id[1:]) if flag.id[1:].isdigit() else 0
            ledger._flag_seq = max(ledger._flag_seq, seq)
        for item in data.get("suggestions", []):
            suggestion = RepairSuggestion(**item)
            ledger.suggestions[suggestion.id] = suggestion
            seq = int(suggestion.id[1:]) if suggestion.id[1:].isdigit() else 0
            ledger._suggestion_seq = max(ledger._suggestion_seq, seq)
        ledger.commit_log = list(data.get("commit_log", []))
        return ledger


# -- duplicate nodes -----------------------------------------------------------


def detect_duplicate_nodes(network: InfrastructureNetwork, layer_id: str, ledger: FlagLedger) -> list[Flag]:
    """Flag every unordered pair of same-layer nodes within epsilon.

    Transitive clusters get pairwise flags that share one merge
    suggestion. Pairs whose key already exists in the ledger (open,
    accepted or rejected) are skipped.
    """
    network.layer(layer_id)
    nodes = sorted(network.layer_nodes(layer_id), key=lambda n: n.id)
    index = geometry.build_node_index(network, layer_id)
    eps = network.epsilon

    pairs = []
    for node in nodes:
        p = node.position
        for other_id in index.query_bbox((p.x, p.y, p.x, p.y), pad=eps):
            if other_id <= node.id:
                continue
            other = network.nodes[other_id]
            if p.distance_to(other.position) <= eps:
                pairs.append((node.id, other_id))

    # transitive clusters via union-find
    parent: dict[str, str] = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for a, b in pairs:
        union(a, b)

    clusters: dict[str, list[str]] = {}
    for a, b in pairs:
        clusters.setdefault(find(a), None)
    for root in clusters:
        members = sorted(x for x in parent if find(x) == root)
        clusters[root] = members

    created: list[Flag] = []
    suggestion_by_root: dict[str, RepairSuggestion] = {}
    for a, b in sorted(pairs):
        key = f"dup:{a}|{b}"
        if ledger.has_key(key):
            continue
        root = find(a)
        suggestion = suggestion_by_root.get(root)
        if suggestion is None:
            cluster_key = "dupcluster:" + "|".join(clusters[root])
            if ledger.has_key(cluster_key):
                continue
            suggestion = ledger.add_suggestion(
                action="merge_nodes",
                payload={"node_ids": clusters[root], "survivor": clusters[root][0]},
                provenance={"rule": "duplicate_nodes", "layer": layer_id, "key": cluster_key},
            )
            ledger._keys.add(cluster_key)
            suggestion_by_root[root] = suggestion
        flag = ledger.add_flag(
            target=b,
            rule="duplicate_nodes",
            detail=f"nodes {a} and {b} are co-located within {eps} m",
            suggestion_id=suggestion.id,
            created_rev=network.revision,
            key=key,
        )
        for nid in (a, b):
            flag_list = network.nodes[nid].flag_ids
            if flag.id not in flag_list:
                flag_list.append(flag.id)
        created.append(flag)
    return created


def merge_duplicate_nodes(network: InfrastructureNetwork, suggestion: RepairSuggestion) -> list:
    """Edit batch merging a co-located cluster into its smallest-id node.

    Re-points every edge of the removed nodes to the survivor, collapses
    resulting self-loops and parallel duplicates, and merges attributes
    survivor-wins; conflicts are noted in the suggestion payload.
    """
    if suggestion.action != "merge_nodes":
        raise ValidationError("suggestion is not a merge_nodes suggestion")
    if suggestion.applied:
        raise ConflictError(f"suggestion {suggestion.id} already applied")
    cluster = sorted(suggestion.payload["node_ids"])
    survivor_id = cluster[0]
    removed = cluster[1:]
    for nid in cluster:
        network.node(nid)

    survivor = network.nodes[survivor_id]
    merged_attrs = dict(survivor.attributes)
    notes = []
    batch = []

    cluster_set = set(cluster)
    # endpoint pairs already taken by edges not touching the removed nodes
    taken = set()
    for edge in network.edges.values():
        if edge.endpoint_a in cluster_set or edge.endpoint_b in cluster_set:
            continue
        taken.add(frozenset((edge.endpoint_a, edge.endpoint_b)))

    touched = sorted(
        eid for eid, e in network.edges.items()
        if e.endpoint_a in cluster_set or e.endpoint_b in cluster_set
    )
    for eid in touched:
        edge = network.edges[eid]
        new_a = survivor_id if edge.endpoint_a in cluster_set else edge.endpoint_a
        new_b = survivor_id if edge.endpoint_b in cluster_set else edge.endpoint_b
        if new_a == new_b:
            notes.append(f"collapsed self-loop {eid}")
            batch.append(remove_edge(eid))
            continue
        pair = frozenset((new_a, new_b))
        if pair in taken:
            notes.append(f"collapsed parallel edge {eid}")
            batch.append(remove_edge(eid))
            continue
        taken.add(pair)
        if (new_a, new_b) != (edge.endpoint_a, edge.endpoint_b):
            # the merged endpoint moves to the survivor position; straight
            # polylines stay empty, curved ones get their boundary re-pinned
            polyline = None
            if edge.polyline:
                polyline = list(edge.polyline)
                if edge.endpoint_a in cluster_set:
                    polyline[0] = survivor.position
                if edge.endpoint_b in cluster_set:
                    polyline[-1] = survivor.position
            batch.append(modify_edge(eid, endpoint_a=new_a, endpoint_b=new_b, polyline=polyline))

    for nid in removed:
        node = network.nodes[nid]
        for key, value in node.attributes.items():
            if key not in merged_attrs:
                merged_attrs[key] = value
            elif merged_attrs[key] != value:
                notes.append(f"attribute conflict on {key!r}: kept {merged_attrs[key]!r}, dropped {value!r} from {nid}")
        batch.append(remove_node(nid))

    if merged_attrs != survivor.attributes:
        batch.append(modify_node(survivor_id, attributes=merged_attrs))
    if notes:
        suggestion.payload.setdefault("notes", []).extend(notes)
    return batch


# -- CAD symbol circles ----------------------------------------------------------


def _strip_face_spurs(walk_nodes: list, walk_edges: list):
    """Remove out-and-back bridge spurs from a face walk.

    A dangling edge inside a face is traversed twice in a row (there and
    back); stripping consecutive same-edge step pairs leaves the cycle
    proper. The walk is circular, so the seam gets the same treatment.
    """
    stack: list = []
    for step in zip(walk_nodes, walk_edges):
        if stack and stack[-1][1] == step[1]:
            stack.pop()
        else:
            stack.append(step)
    while len(stack) >= 2 and stack[0][1] == stack[-1][1]:
        stack.pop(0)
        stack.pop()
    if not stack:
        return [], []
    nodes, edges = zip(*stack)
    return list(nodes), list(edges)


def detect_symbol_circles(
    network: InfrastructureNetwork,
    layer_id: str,
    ledger: FlagLedger,
    max_radius: float = SYMBOL_MAX_RADIUS,
    min_nodes: int = SYMBOL_MIN_NODES,
    radial_tolerance: float = SYMBOL_RADIAL_TOLERANCE,
) -> list[Flag]:
    """Flag minimal cycles whose nodes fit a circle (CAD manhole symbols).

    A cycle qualifies when it has >= min_nodes nodes, every node's
    distance to the cycle centroid stays within radial_tolerance of the
    mean, and the mean radius is at most max_radius.
    """
    network.layer(layer_id)
    created = []
    for raw_nodes, _ring, raw_edges in sorted(geometry._face_chains(network, layer_id)):
        cycle_nodes, cycle_edges = _strip_face_spurs(raw_nodes, raw_edges)
        unique = sorted(set(cycle_nodes))
        if len(unique) < min_nodes or len(unique) != len(cycle_nodes):
            continue
        positions = [network.nodes[nid].position for nid in unique]
        cx = sum(p.x for p in positions) / len(positions)
        cy = sum(p.y for p in positions) / len(positions)
        radii = [math.hypot(p.x - cx, p.y - cy) for p in positions]
        mean_radius = sum(radii) / len(radii)
        if mean_radius > max_radius or mean_radius == 0:
            continue
        if any(abs(r - mean_radius) > radial_tolerance * mean_radius for r in radii):
            continue
        key = "sym:" + "|".join(unique)
        if ledger.has_key(key):
            continue
        cycle_edge_set = set(cycle_edges)
        attachments = []
        chords = []
        for nid in unique:
            for eid in network.incident_edges(nid):
                if eid in cycle_edge_set:
                    continue
                other = network.edges[eid].other_endpoint(nid)
                if other in unique:
                    chords.append(eid)
                else:
                    attachments.append({"edge_id": eid, "cycle_node": nid, "outside_node": other})
        suggestion = ledger.add_suggestion(
            action="replace_symbol",
            payload={
                "cycle_nodes": unique,
                "cycle_edges": sorted(cycle_edge_set),
                "chord_edges": sorted(set(chords)),
                "centroid": [cx, cy],
                "mean_radius": mean_radius,
                "attachments": sorted(attachments, key=lambda a: a["edge_id"]),
                "node_positions": {
                    nid: [network.nodes[nid].position.x, network.nodes[nid].position.y]
                    for nid in unique
                },
            },
            provenance={"rule": "symbol_circle", "layer": layer_id, "key": key},
        )
        flag = ledger.add_flag(
            target=unique[0],
            rule="symbol_circle",
            detail=(
                f"{len(unique)}-node cycle fits a circle of radius {mean_radius:.3f} m; "
                "likely a drawing symbol, not topology"
            ),
            suggestion_id=suggestion.id,
            created_rev=network.revision,
            key=key,
        )
        for nid in unique:
            if flag.id not in network.nodes[nid].flag_ids:
                network.nodes[nid].flag_ids.append(flag.id)
        created.append(flag)
    return created


def replace_symbol(network: InfrastructureNetwork, suggestion: RepairSuggestion) -> list:
    """Edit batch replacing a symbol circle with one attributed center node.

    The cycle's nodes and edges go away; a new node at the centroid gets
    ``Is_manhole = 1`` and every edge that attached to the circle from
    outside is re-pointed to it.
    """
    if suggestion.action != "replace_symbol":
        raise ValidationError("suggestion is not a replace_symbol suggestion")
    if suggestion.applied:
        raise ConflictError(f"suggestion {suggestion.id} already applied")
    payload = suggestion.payload
    for nid, pos in payload["node_positions"].items():
        if nid not in network.nodes:
            raise ConflictError(f"symbol node {nid} vanished since detection")
        p = network.nodes[nid].position
        if math.hypot(p.x - pos[0], p.y - pos[1]) > network.epsilon:
            raise ConflictError(f"symbol node {nid} moved since detection")
    for eid in payload["cycle_edges"]:
        if eid not in network.edges:
            raise ConflictError(f"symbol edge {eid} vanished since detection")

    layer_id = network.nodes[payload["cycle_nodes"][0]].layer_id
    center_id = payload.get("new_node_id")
    if not center_id or center_id in network.nodes:
        center_id = network.allocate_node_id()
        payload["new_node_id"] = center_id
    cx, cy = payload["centroid"]

    batch = [
        add_node(
            Node(
                id=center_id,
                position=Point2D(cx, cy),
                layer_id=layer_id,
                attributes={"Is_manhole": 1},
            )
        )
    ]
    taken = set()
    for attachment in payload["attachments"]:
        eid = attachment["edge_id"]
        edge = network.edge(eid)
        new_a = center_id if edge.endpoint_a == attachment["cycle_node"] else edge.endpoint_a
        new_b = center_id if edge.endpoint_b == attachment["cycle_node"] else edge.endpoint_b
        pair = frozenset((new_a, new_b))
        if pair in taken:
            batch.append(remove_edge(eid))
            continue
        taken.add(pair)
        batch.append(modify_edge(eid, endpoint_a=new_a, endpoint_b=new_b, polyline=[]))
    for eid in payload["cycle_edges"]:
        batch.append(remove_edge(eid))
    for eid in payload.get("chord_edges", []):
        batch.append(remove_edge(eid))
    for nid in payload["cycle_nodes"]:
        batch.append(remove_node(nid))
    return batch


# -- dangling ends and valves -----------------------------------------------------


def detect_dangling_ends(
    network: InfrastructureNetwork,
    pipes_layer_id: str,
    building_footprints: geometry.MultiPolygonGeometry,
    ledger: FlagLedger,
) -> list[Flag]:
    """Flag degree-1 pipe nodes that do not end inside a building.

    A pipe should either terminate in a building or connect onward; a
    degree-1 node inside (or on the boundary of) the footprint
    multipolygon is exempt.
    """
    network.layer(pipes_layer_id)
    created = []
    for node in sorted(network.layer_nodes(pipes_layer_id), key=lambda n: n.id):
        if node_degree(network, node.id) != 1:
            continue
        if geometry.multipolygon_contains(node.position, building_footprints, eps=network.epsilon):
            continue
        key = f"dangling:{node.id}"
        if ledger.has_key(key):
            continue
        flag = ledger.add_flag(
            target=node.id,
            rule="dangling_end",
            detail="degree-1 pipe end outside every building footprint",
            created_rev=network.revision,
            key=key,
        )
        node.flag_ids.append(flag.id)
        created.append(flag)
    return created


def check_valve_degree(network: InfrastructureNetwork, pipes_layer_id: str, ledger: FlagLedger) -> list[Flag]:
    """Flag valve nodes (attribute type == "valve") with fewer than 2 connections."""
    network.layer(pipes_layer_id)
    created = []
    for node in sorted(network.layer_nodes(pipes_layer_id), key=lambda n: n.id):
        if node.attributes.get("type") != "valve":
            continue
        degree = node_degree(network, node.id)
        if degree >= 2:
            continue
        key = f"valve:{node.id}"
        if ledger.has_key(key):
            continue
        flag = ledger.add_flag(
            target=node.id,
            rule="valve_degree",
            detail=f"valve has {degree} connection(s); expected at least 2",
            created_rev=network.revision,
            key=key,
        )
        node.flag_ids.append(flag.id)
        created.append(flag)
    return created


# -- missing-edge inference --------------------------------------------------------


def _corridor_ok(
    a: Point2D,
    b: Point2D,
    street_index: geometry.SpatialIndex,
    network: InfrastructureNetwork,
    half_width: float,
    spacing: float = CORRIDOR_SAMPLE_SPACING,
) -> bool:
    """True when every sample of segment a-b lies within half_width of a street."""
    length = a.distance_to(b)
    steps = max(1, math.ceil(length / spacing))
    for i in range(steps + 1):
        t = i / steps
        sample = Point2D(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
        near = street_index.query_bbox((sample.x, sample.y, sample.x, sample.y), pad=half_width)
        ok = False
        for eid in near:
            chain = network.edges[eid]
            pts = chain.polyline or [
                network.nodes[chain.endpoint_a].position,
                network.nodes[chain.endpoint_b].position,
            ]
            if geometry.distance_point_to_chain(sample, pts) <= half_width:
                ok = True
                break
        if not ok:
            return False
    return True


def infer_missing_edges(
    network: InfrastructureNetwork,
    pipes_layer_id: str,
    streets_layer_id: str | None = None,
    search_radius: float = INFER_SEARCH_RADIUS,
    corridor_half_width: float = INFER_CORRIDOR_HALF_WIDTH,
    ledger: FlagLedger | None = None,
    dangling_ids: list | None = None,
) -> list[RepairSuggestion]:
    """Suggest reconnections for flagged dangling pipe ends.

    Candidate targets are pipe nodes within search_radius, excluding the
    end's current neighbors. With a streets layer, a candidate edge
    survives only if every 1 m sample of it stays within
    corridor_half_width of some street (pipes run underneath streets).
    The nearest surviving candidate wins, ties to the smaller id; mutually
    chosen pairs collapse into one suggestion.
    """
    if search_radius <= 0:
        raise ValueError("search_radius must be positive")
    if corridor_half_width <= 0:
        raise ValueError("corridor_half_width must be positive")
    network.layer(pipes_layer_id)

    if dangling_ids is None:
        if ledger is None:
            raise ValueError("either a ledger or explicit dangling_ids is required")
        dangling_ids = [
            f.target for f in ledger.open_flags("dangling_end")
            if f.target in network.nodes and network.nodes[f.target].layer_id == pipes_layer_id
        ]
    dangling_ids = sorted(set(dangling_ids))

    node_index = geometry.build_node_index(network, pipes_layer_id)
    street_index = None
    if streets_layer_id is not None:
        network.layer(streets_layer_id)
        street_index = geometry.build_edge_index(network, streets_layer_id)

    picks: dict[str, str] = {}
    for end_id in dangling_ids:
        if end_id not in network.nodes or node_degree(network, end_id) != 1:
            continue
        end = network.nodes[end_id]
        neighbors = network.neighbors(end_id)
        p = end.position
        candidates = []
        for other_id in node_index.query_bbox((p.x, p.y, p.x, p.y), pad=search_radius):
            if other_id == end_id or other_id in neighbors:
                continue
            d = p.distance_to(network.nodes[other_id].position)
            if d <= search_radius:
                candidates.append((d, other_id))
        candidates.sort()
        for d, other_id in candidates:
            if street_index is not None and not _corridor_ok(
                p, network.nodes[other_id].position, street_index, network, corridor_half_width
            ):
                continue
            picks[end_id] = other_id
            break

    suggestions = []
    emitted_pairs = set()
    for end_id in sorted(picks):
        target_id = picks[end_id]
        pair = tuple(sorted((end_id, target_id)))
        if pair in emitted_pairs:
            continue  # mutual pair already covered
        emitted_pairs.add(pair)
        key = f"infer:{pair[0]}|{pair[1]}"
        if ledger is not None and ledger.has_key(key):
            continue
        mutual = picks.get(target_id) == end_id
        payload = {
            "node_a": pair[0],
            "node_b": pair[1],
            "mutual": mutual,
            "geometry": [
                [network.nodes[pair[0]].position.x, network.nodes[pair[0]].position.y],
                [network.nodes[pair[1]].position.x, network.nodes[pair[1]].position.y],
            ],
        }
        provenance = {
            "rule": "inferred_edge",
            "layer": pipes_layer_id,
            "streets_layer": streets_layer_id,
            "search_radius": search_radius,
            "corridor_half_width": corridor_half_width if streets_layer_id else None,
            "key": key,
        }
        if ledger is not None:
            suggestion = ledger.add_suggestion("add_edge", payload, provenance)
            flag = ledger.add_flag(
                target=pair[0],
                rule="inferred_edge",
                detail=f"proposed reconnection {pair[0]} - {pair[1]}",
                suggestion_id=suggestion.id,
                created_rev=network.revision,
                key=key,
            )
            for nid in pair:
                if flag.id not in network.nodes[nid].flag_ids:
                    network.nodes[nid].flag_ids.append(flag.id)
        else:
            suggestion = RepairSuggestion(id=f"tmp-{len(suggestions) + 1}", action="add_edge", payload=payload, provenance=provenance)
        suggestions.append(suggestion)
    return suggestions


def build_add_edge_batch(network: InfrastructureNetwork, suggestion: RepairSuggestion) -> list:
    if suggestion.action not in ("add_edge", "connect_boundary"):
        raise ValidationError("suggestion does not add an edge")
    if suggestion.applied:
        raise ConflictError(f"suggestion {suggestion.id} already applied")
    a = network.node(suggestion.payload["node_a"])
    b = network.node(suggestion.payload["node_b"])
    edge_id = suggestion.payload.get("edge_id")
    if not edge_id or edge_id in network.edges:
        edge_id = network.allocate_edge_id()
        suggestion.payload["edge_id"] = edge_id
    return [
        add_edge(
            Edge(
                id=edge_id,
                endpoint_a=a.id,
                endpoint_b=b.id,
                layer_id=a.layer_id,
                attributes={"inferred": 1} if suggestion.action == "add_edge" else {"boundary_repair": 1},
            )
        )
    ]


# -- building boundary repair --------------------------------------------------------


def repair_building_boundaries(
    network: InfrastructureNetwork,
    buildings_layer_id: str,
    ledger: FlagLedger,
    open_node_ids: list | None = None,
) -> list[RepairSuggestion]:
    """Suggest connecting each open-boundary building node to its nearest peer."""
    network.layer(buildings_layer_id)
    if open_node_ids is None:
        _, open_node_ids = geometry.polygonize_layer(network, buildings_layer_id)
    index = geometry.build_node_index(network, buildings_layer_id)
    if len(index) == 0:
        return []

    suggestions = []
    emitted_pairs = set()
    # search radius: generous, bounded by the layer extent
    nodes = network.layer_nodes(buildings_layer_id)
    xs = [n.position.x for n in nodes]
    ys = [n.position.y for n in nodes]
    max_radius = math.hypot(max(xs) - min(xs), max(ys) - min(ys)) or 1.0

    for node_id in sorted(set(open_node_ids)):
        node = network.node(node_id)
        neighbors = network.neighbors(node_id)
        hit = index.nearest(
            node.position,
            max_radius,
            accept=lambda nid: nid != node_id and nid not in neighbors,
        )
        if hit is None:
            continue
        target_id, _d = hit
        pair = tuple(sorted((node_id, target_id)))
        if pair in emitted_pairs:
            continue
        emitted_pairs.add(pair)
        key = f"open:{pair[0]}|{pair[1]}"
        if ledger.has_key(key):
            continue
        suggestion = ledger.add_suggestion(
            "connect_boundary",
            {
                "node_a": pair[0],
                "node_b": pair[1],
                "geometry": [
                    [network.nodes[pair[0]].position.x, network.nodes[pair[0]].position.y],
                    [network.nodes[pair[1]].position.x, network.nodes[pair[1]].position.y],
                ],
            },
            {"rule": "open_boundary", "layer": buildings_layer_id, "key": key},
        )
        flag = ledger.add_flag(
            target=node_id,
            rule="open_boundary",
            detail=f"building node {node_id} closes no polygon; connect to {target_id}",
            suggestion_id=suggestion.id,
            created_rev=network.revision,
            key=key,
        )
        node.flag_ids.append(flag.id)
        suggestions.append(suggestion)
    return suggestions


# -- application and resolution ---------------------------------------------------


def build_suggestion_batch(network: InfrastructureNetwork, suggestion: RepairSuggestion) -> list:
    if suggestion.action == "merge_nodes":
        return merge_duplicate_nodes(network, suggestion)
    if suggestion.action == "replace_symbol":
        return replace_symbol(network, suggestion)
    if suggestion.action in ("add_edge", "connect_boundary"):
        return build_add_edge_batch(network, suggestion)
    raise ValidationError(f"unknown suggestion action {suggestion.action!r}")


def apply_suggestion(network: InfrastructureNetwork, ledger: FlagLedger, suggestion: RepairSuggestion) -> int:
    """Apply a suggestion's edit batch; flags stay open for validation."""
    if suggestion.applied:
        raise ConflictError(f"suggestion {suggestion.id} already applied")
    batch = build_suggestion_batch(network, suggestion)
    undo = inverse_batch(network, batch)
    created = []
    for action in batch:
        if action.kind == "add_node" and action.node is not None:
            created.append(action.node.id)
        if action.kind == "add_edge" and action.edge is not None:
            created.append(action.edge.id)
    revision = apply_edit(network, batch)
    suggestion.applied = True
    suggestion.undo = [action_to_dict(a) for a in undo]
    suggestion.created_entity_ids = created
    ledger.record_commit(revision, origin=f"suggestion:{suggestion.id}")
    return revision


def revert_suggestion(network: InfrastructureNetwork, ledger: FlagLedger, suggestion: RepairSuggestion) -> int:
    if not suggestion.applied:
        raise ConflictError(f"suggestion {suggestion.id} is not applied")
    undo = [action_from_dict(d) for d in suggestion.undo]
    revision = apply_edit(network, undo)
    suggestion.applied = False
    suggestion.undo = []
    suggestion.created_entity_ids = []
    ledger.record_commit(revision, origin=f"revert:{suggestion.id}")
    return revision


def resolve_flag(
    network: InfrastructureNetwork,
    ledger: FlagLedger,
    flag_id: str,
    decision: str,
    actor: str,
) -> Flag:
    """Record the human decision on a flag, applying or reverting its fix.

    accepted: the suggestion's edits are applied (if not already) and
    kept. rejected: applied edits are reverted. Flags sharing one
    suggestion resolve together; a flag resolves exactly once.
    """
    if decision not in ("accepted", "rejected"):
        raise ValidationError(f"decision must be accepted or rejected, got {decision!r}")
    if actor not in RESOLVER_ROLES:
        raise AuthorizationError(f"role {actor!r} may not resolve flags")
    flag = ledger.flag(flag_id)
    if flag.status != "open":
        raise ConflictError(f"flag {flag_id} already {flag.status}")

    if flag.suggestion_id is not None:
        suggestion = ledger.suggestion(flag.suggestion_id)
        if decision == "accepted" and not suggestion.applied:
            apply_suggestion(network, ledger, suggestion)
        elif decision == "rejected" and suggestion.applied:
            revert_suggestion(network, ledger, suggestion)
        siblings = ledger.flags_for_suggestion(flag.suggestion_id)
    else:
        siblings = [flag]

    stamp = time.time()
    for sibling in siblings:
        if sibling.status == "open":
            sibling.status = decision
            sibling.resolved_by = actor
            sibling.resolved_at = stamp
    return flag


def audit_unflagged_mutations(ledger: FlagLedger) -> list[str]:
    """Return provenance violations: commits not traceable to a flag or actor."""
    problems = []
    for entry in ledger.commit_log:
        origin = entry.get("origin", "")
        if origin.startswith(("suggestion:", "revert:")):
            sid = origin.split(":", 1)[1]
            if sid not in ledger.suggestions:
                problems.append(f"revision {entry['revision']}: unknown suggestion {sid}")
            elif not ledger.flags_for_suggestion(sid):
                problems.append(f"revision {entry['revision']}: suggestion {sid} has no flag")
        elif origin.startswith("manual:"):
            fid = origin.split(":", 1)[1]
            if fid not in ledger.flags:
                problems.append(f"revision {entry['revision']}: unknown manual flag {fid}")
        else:
            problems.append(f"revision {entry['revision']}: unattributed commit origin {origin!r}")
    return problems
