"""GeoJSON and node/edge table ingest, network assembly, export.

GeoJSON is the canonical interchange format; coordinates must already be
in a projected planar CRS (meters). Documents that declare a geographic
CRS are rejected. Reserved property keys are prefixed ``_guides_``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

from .errors import IntegrityError, NotFoundError, ParseError, ValidationError
from .model import Edge, Footprint, InfrastructureNetwork, Layer, Node, Point2D, chain_of
from . import geometry

SUPPORTED_GEOMETRIES = ("Point", "LineString", "Polygon", "MultiPolygon")
FLAGS_PROPERTY = "_guides_flags"
RESERVED_PREFIX = "_guides_"

GEOGRAPHIC_CRS_NAMES = ("CRS84", "4326", "WGS84", "WGS 84")


@dataclass
class FeatureRecord:
    geometry_kind: str  # point | linestring | polygon | multipolygon
    coordinates: list
    properties: dict = field(default_factory=dict)
    source_layer: str = ""
    feature_id: str | None = None
    flags: list = field(default_factory=list)


def _require_finite(value, context):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise ValidationError(f"{context}: coordinate {value!r} is not a finite number")
    return float(value)


def _validate_position(pos, context):
    if not isinstance(pos, (list, tuple)) or len(pos) < 2:
        raise ValidationError(f"{context}: position must be [x, y]")
    return [_require_finite(pos[0], context), _require_finite(pos[1], context)]


def _validate_ring(ring, context):
    if not isinstance(ring, list) or len(ring) < 4:
        raise ValidationError(f"{context}: ring needs >= 4 positions (closed)")
    ring = [_validate_position(p, context) for p in ring]
    if ring[0] != ring[-1]:
        raise ValidationError(f"{context}: ring is not closed (first vertex must repeat last)")
    return ring


def _validate_geometry(kind, coords, context):
    if kind == "Point":
        return _validate_position(coords, context)
    if kind == "LineString":
        if not isinstance(coords, list) or len(coords) < 2:
            raise ValidationError(f"{context}: LineString needs >= 2 vertices")
        return [_validate_position(p, context) for p in coords]
    if kind == "Polygon":
        if not isinstance(coords, list) or not coords:
            raise ValidationError(f"{context}: Polygon needs >= 1 ring")
        return [_validate_ring(r, context) for r in coords]
    if kind == "MultiPolygon":
        if not isinstance(coords, list) or not coords:
            raise ValidationError(f"{context}: MultiPolygon needs >= 1 polygon")
        return [[_validate_ring(r, context) for r in poly] for poly in coords]
    raise ValidationError(f"{context}: unhandled geometry type {kind!r}")


def parse_layer(document, layer_meta: Layer, unsupported: list | None = None) -> list[FeatureRecord]:
    """Parse a GeoJSON FeatureCollection into validated feature records.

    Unsupported geometry kinds (MultiLineString, GeometryCollection, ...)
    are appended to ``unsupported`` as (index, type) instead of being
    silently dropped. Malformed JSON raises ParseError with the byte
    offset; structural problems raise ValidationError naming the feature
    index.
    """
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON at offset {exc.pos}: {exc.msg}", offset=exc.pos) from exc

    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise ValidationError("document is not a FeatureCollection")
    crs_name = json.dumps(doc.get("crs")) if doc.get("crs") else ""
    if any(tag in crs_name for tag in GEOGRAPHIC_CRS_NAMES):
        raise ValidationError(
            "geographic (lon/lat) coordinates are not supported; project to planar meters first"
        )
    features = doc.get("features")
    if not isinstance(features, list):
        raise ValidationError("FeatureCollection has no features array")

    records = []
    for index, feature in enumerate(features):
        context = f"feature {index} of layer {layer_meta.id!r}"
        if not isinstance(feature, dict) or feature.get("type") != "Feature":
            raise ValidationError(f"{context}: not a Feature")
        geom = feature.get("geometry")
        if not isinstance(geom, dict):
            raise ValidationError(f"{context}: missing geometry")
        kind = geom.get("type")
        if kind not in SUPPORTED_GEOMETRIES:
            if unsupported is not None:
                unsupported.append((index, kind))
            continue
        coords = _validate_geometry(kind, geom.get("coordinates"), context)
        raw_props = feature.get("properties") or {}
        properties = {
            k: v for k, v in raw_props.items() if not str(k).startswith(RESERVED_PREFIX)
        }
        feature_id = feature.get("id")
        if feature_id is None and "id" in properties:
            feature_id = properties.pop("id")
        flags = raw_props.get(FLAGS_PROPERTY) or []
        records.append(
            FeatureRecord(
                geometry_kind=kind.lower(),
                coordinates=coords,
                properties=properties,
                source_layer=layer_meta.id,
                feature_id=str(feature_id) if feature_id is not None else None,
                flags=list(flags),
            )
        )
    return records


# -- network assembly ----------------------------------------------------------


def _snap_key(x: float, y: float, epsilon: float):
    return (math.floor(x / epsilon), math.floor(y / epsilon))


class _Snapper:
    """epsilon-grid lookup of already-created nodes, per layer."""

    def __init__(self, epsilon: float):
        self.epsilon = epsilon
        self.buckets: dict = {}

    def find(self, layer_id: str, p: Point2D):
        cx, cy = _snap_key(p.x, p.y, self.epsilon)
        best = None
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for node in self.buckets.get((layer_id, cx + dx, cy + dy), ()):
                    d = node.position.distance_to(p)
                    if d <= self.epsilon and (best is None or d < best[1] or (d == best[1] and node.id < best[0].id)):
                        best = (node, d)
        return best[0] if best else None

    def add(self, layer_id: str, node: Node):
        key = (layer_id,) + _snap_key(node.position.x, node.position.y, self.epsilon)
        self.buckets.setdefault(key, []).append(node)


def _note_skipped(ledger, layer_id, index, reason):
    if ledger is not None:
        ledger.add_flag(
            target=f"feature:{layer_id}:{index}",
            rule="manual",
            detail=reason,
            created_rev=0,
        )


def build_network(
    features_by_layer,
    epsilon: float = 0.01,
    ledger=None,
) -> InfrastructureNetwork:
    """Assemble a network from parsed features, layer by layer.

    ``features_by_layer`` is an ordered sequence of (Layer, records).
    Point features become nodes (coincident points stay distinct; the
    duplicate-node rule finds them later). LineString endpoints snap to
    same-layer nodes within epsilon or create new ones. Polygons land in
    the footprint store. Afterwards every node sitting on a same-layer
    edge interior splits that edge.

    Zero-length linestrings and self-loops are flagged into ``ledger``
    (when given) and skipped rather than silently stored.
    """
    network = InfrastructureNetwork(epsilon=epsilon)
    for layer, _records in features_by_layer:
        network.add_layer(layer)

    snapper = _Snapper(epsilon)

    for layer, records in features_by_layer:
        for index, record in enumerate(records):
            if record.geometry_kind == "point":
                x, y = record.coordinates[0], record.coordinates[1]
                node = Node(
                    id=record.feature_id or network.allocate_node_id(),
                    position=Point2D(x, y),
                    layer_id=layer.id,
                    attributes=dict(record.properties),
                    flag_ids=[f["id"] if isinstance(f, dict) else f for f in record.flags],
                )
                network.insert_node(node)
                snapper.add(layer.id, node)
            elif record.geometry_kind == "linestring":
                pts = [Point2D(c[0], c[1]) for c in record.coordinates]
                if geometry.chain_length(pts) <= epsilon:
                    _note_skipped(ledger, layer.id, index, "zero-length linestring skipped at load")
                    continue
                ends = []
                for endpoint in (pts[0], pts[-1]):
                    existing = snapper.find(layer.id, endpoint)
                    if existing is None:
                        existing = Node(
                            id=network.allocate_node_id(),
                            position=endpoint,
                            layer_id=layer.id,
                        )
                        network.insert_node(existing)
                        snapper.add(layer.id, existing)
                    ends.append(existing)
                if ends[0].id == ends[1].id:
                    _note_skipped(ledger, layer.id, index, "self-loop linestring skipped at load")
                    continue
                polyline = []
                if len(pts) > 2:
                    polyline = [ends[0].position] + pts[1:-1] + [ends[1].position]
                edge = Edge(
                    id=record.feature_id or network.allocate_edge_id(),
                    endpoint_a=ends[0].id,
                    endpoint_b=ends[1].id,
                    layer_id=layer.id,
                    attributes=dict(record.properties),
                    polyline=polyline,
                )
                network.insert_edge(edge)
            elif record.geometry_kind in ("polygon", "multipolygon"):
                polys = record.coordinates if record.geometry_kind == "multipolygon" else [record.coordinates]
                shapes = [
                    geometry.PolygonGeometry.from_rings(rings[0], rings[1:]) for rings in polys
                ]
                footprint = Footprint(
                    id=record.feature_id or f"fp{len(network.footprints) + 1}",
                    layer_id=layer.id,
                    geometry=geometry.MultiPolygonGeometry(polygons=shapes),
                    attributes=dict(record.properties),
                )
                network.insert_footprint(footprint)
            else:
                raise ValidationError(f"unhandled geometry kind {record.geometry_kind!r}")

    split_edges_at_nodes(network)
    network.check_integrity()
    return network


def split_edges_at_nodes(network: InfrastructureNetwork, max_passes: int = 10) -> int:
    """Split every same-layer edge at nodes lying on its interior.

    The node wins: the split point is the node position. Returns the
    number of splits performed. Idempotent once clean.
    """
    epsilon = network.epsilon
    total_splits = 0
    for _ in range(max_passes):
        splits_this_pass = 0
        for layer_id in sorted(network.layers):
            node_index = geometry.build_node_index(network, layer_id)
            for edge_id in sorted(eid for eid, e in network.edges.items() if e.layer_id == layer_id):
                edge = network.edges.get(edge_id)
                if edge is None:
                    continue
                chain = chain_of(edge, network)
                bbox = (
                    min(p.x for p in chain), min(p.y for p in chain),
                    max(p.x for p in chain), max(p.y for p in chain),
                )
                interior_hits = []
                for node_id in node_index.query_bbox(bbox, pad=epsilon):
                    if node_id in (edge.endpoint_a, edge.endpoint_b):
                        continue
                    node = network.nodes[node_id]
                    if geometry.distance_point_to_chain(node.position, chain) > epsilon:
                        continue
                    end_a = network.nodes[edge.endpoint_a].position
                    end_b = network.nodes[edge.endpoint_b].position
                    if node.position.distance_to(end_a) <= epsilon or node.position.distance_to(end_b) <= epsilon:
                        continue  # coincides with an endpoint: duplicate-node case
                    interior_hits.append(node)
                if not interior_hits:
                    continue
                _split_edge(network, edge, chain, interior_hits)
                splits_this_pass += len(interior_hits)
        total_splits += splits_this_pass
        if splits_this_pass == 0:
            break
    return total_splits


def _chain_parameter(chain: list[Point2D], p: Point2D):
    """Arc-length position of the closest point of the chain to p."""
    best = (float("inf"), 0.0)
    walked = 0.0
    for a, b in zip(chain, chain[1:]):
        seg = a.distance_to(b)
        d = geometry.point_to_segment_distance(p, a, b)
        if d < best[0]:
            dx, dy = b.x - a.x, b.y - a.y
            seg2 = dx * dx + dy * dy
            t = 0.0 if seg2 == 0 else max(0.0, min(1.0, ((p.x - a.x) * dx + (p.y - a.y) * dy) / seg2))
            best = (d, walked + t * seg)
        walked += seg
    return best[1]


def _split_edge(network: InfrastructureNetwork, edge: Edge, chain: list[Point2D], nodes: list[Node]):
    ordered = sorted(nodes, key=lambda n: (_chain_parameter(chain, n.position), n.id))
    network.drop_edge(edge.id)
    boundary_nodes = (
        [network.nodes[edge.endpoint_a]] + ordered + [network.nodes[edge.endpoint_b]]
    )
    cuts = [_chain_parameter(chain, n.position) for n in ordered]
    pieces = _cut_chain(chain, cuts)
    for i, piece in enumerate(pieces):
        a, b = boundary_nodes[i], boundary_nodes[i + 1]
        piece = [a.position] + piece[1:-1] + [b.position]
        piece = _dedupe_vertices(piece)
        if a.id == b.id:
            continue  # degenerate sliver
        network.insert_edge(
            Edge(
                id=network.allocate_edge_id(),
                endpoint_a=a.id,
                endpoint_b=b.id,
                layer_id=edge.layer_id,
                attributes=dict(edge.attributes),
                polyline=piece if len(piece) > 2 else [],
            )
        )


def _cut_chain(chain: list[Point2D], cuts: list[float]) -> list[list[Point2D]]:
    pieces = []
    current = [chain[0]]
    walked = 0.0
    cut_iter = iter(cuts)
    next_cut = next(cut_iter, None)
    for a, b in zip(chain, chain[1:]):
        seg = a.distance_to(b)
        seg_start = walked
        while next_cut is not None and seg > 0 and seg_start <= next_cut <= seg_start + seg:
            t = (next_cut - seg_start) / seg
            cut_point = Point2D(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
            current.append(cut_point)
            pieces.append(current)
            current = [cut_point]
            next_cut = next(cut_iter, None)
        current.append(b)
        walked += seg
    pieces.append(current)
    return pieces


def _dedupe_vertices(chain: list[Point2D], tol: float = 1e-9) -> list[Point2D]:
    out = [chain[0]]
    for p in chain[1:]:
        if p.distance_to(out[-1]) > tol:
            out.append(p)
    if len(out) == 1:
        out.append(chain[-1])
    return out


# -- export ---------------------------------------------------------------------


def _flags_payload(ledger, entity_id, node=None):
    if ledger is not None:
        found = ledger.flags_for_entity(entity_id)
        if found:
            return [{"id": f.id, "rule": f.rule, "status": f.status} for f in found]
    if node is not None and node.flag_ids:
        return [{"id": fid} for fid in node.flag_ids]
    return None


def export_layer(network: InfrastructureNetwork, layer_id: str, ledger=None) -> dict:
    """Serialize one layer to a GeoJSON FeatureCollection dict.

    Nodes come first, then edges, then footprints, each id-sorted, so the
    output is deterministic. Flags attached to an entity are exported
    under the reserved ``_guides_flags`` property.
    """
    network.layer(layer_id)
    features = []
    for node in sorted(network.layer_nodes(layer_id), key=lambda n: n.id):
        props = dict(sorted(node.attributes.items()))
        payload = _flags_payload(ledger, node.id, node)
        if payload:
            props[FLAGS_PROPERTY] = payload
        features.append(
            {
                "type": "Feature",
                "id": node.id,
                "geometry": {"type": "Point", "coordinates": [node.position.x, node.position.y]},
                "properties": props,
            }
        )
    for edge in sorted(network.layer_edges(layer_id), key=lambda e: e.id):
        props = dict(sorted(edge.attributes.items()))
        payload = _flags_payload(ledger, edge.id)
        if payload:
            props[FLAGS_PROPERTY] = payload
        chain = chain_of(edge, network)
        features.append(
            {
                "type": "Feature",
                "id": edge.id,
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[p.x, p.y] for p in chain],
                },
                "properties": props,
            }
        )
    for footprint in sorted(network.layer_footprints(layer_id), key=lambda f: f.id):
        rings = footprint.geometry.canonical_rings()
        if len(rings) == 1:
            geom = {"type": "Polygon", "coordinates": rings[0]}
        else:
            geom = {"type": "MultiPolygon", "coordinates": rings}
        features.append(
            {
                "type": "Feature",
                "id": footprint.id,
                "geometry": geom,
                "properties": dict(sorted(footprint.attributes.items())),
            }
        )
    return {"type": "FeatureCollection", "features": features}


# -- node/edge tables -------------------------------------------------------------


def _coerce_scalar(text: str):
    if text == "":
        return ""
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _read_rows(source) -> list[dict]:
    if hasattr(source, "read"):
        content = source.read()
    else:
        content = source
    if isinstance(content, bytes):
        content = content.decode("utf-8")
    if "\n" not in content and "," not in content:
        # looks like a path
        with open(content, "r", encoding="utf-8") as fh:
            content = fh.read()
    return list(csv.DictReader(io.StringIO(content)))


def load_tables(nodes_csv, edges_csv, layer_meta: Layer, epsilon: float = 0.01) -> InfrastructureNetwork:
    """Load a layer fragment from headered CSV node/edge tables.

    Node table columns: id, x, y, then attributes; edge table: id, node_a,
    node_b, then attributes. Dangling edge references are collected and
    reported in one error naming every missing id.
    """
    network = InfrastructureNetwork(epsilon=epsilon)
    network.add_layer(layer_meta)

    node_rows = _read_rows(nodes_csv)
    edge_rows = _read_rows(edges_csv)

    for required, rows, table in (
        (("id", "x", "y"), node_rows, "nodes"),
        (("id", "node_a", "node_b"), edge_rows, "edges"),
    ):
        if rows:
            missing = [c for c in required if c not in rows[0]]
            if missing:
                raise ValidationError(f"{table} table is missing column(s) {missing}")

    seen = set()
    duplicates = set()
    for row in node_rows:
        nid = row["id"]
        if nid in seen:
            duplicates.add(nid)
        seen.add(nid)
    if duplicates:
        raise ValidationError(f"duplicate node id(s) in table: {sorted(duplicates)}")

    for row in node_rows:
        attrs = {
            k: _coerce_scalar(v)
            for k, v in row.items()
            if k not in ("id", "x", "y") and v not in (None, "")
        }
        network.insert_node(
            Node(
                id=row["id"],
                position=Point2D(float(row["x"]), float(row["y"])),
                layer_id=layer_meta.id,
                attributes=attrs,
            )
        )

    seen_edges = set()
    duplicates = set()
    dangling = []
    for row in edge_rows:
        eid = row["id"]
        if eid in seen_edges:
            duplicates.add(eid)
        seen_edges.add(eid)
        for ref in (row["node_a"], row["node_b"]):
            if ref not in network.nodes:
                dangling.append((eid, ref))
    if duplicates:
        raise ValidationError(f"duplicate edge id(s) in table: {sorted(duplicates)}")
    if dangling:
        raise IntegrityError(
            "edge rows reference missing node id(s): "
            + ", ".join(f"{eid}->{ref}" for eid, ref in dangling)
        )

    for row in edge_rows:
        attrs = {
            k: _coerce_scalar(v)
            for k, v in row.items()
            if k not in ("id", "node_a", "node_b") and v not in (None, "")
        }
        network.insert_edge(
            Edge(
                id=row["id"],
                endpoint_a=row["node_a"],
                endpoint_b=row["node_b"],
                layer_id=layer_meta.id,
                attributes=attrs,
            )
        )
    network.check_integrity()
    return network
