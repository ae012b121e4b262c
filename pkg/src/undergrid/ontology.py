"""Domain and spatio-temporal ontologies, instance matching, integrated queries.

Ontologies load from a small JSON format (``classes``, ``instances``,
``footprint_refs``). Instance matching materializes geometric and
temporal containment/overlap relations between domain instances and the
spatio-temporal hierarchy; integrated queries use those mappings as a
candidate source and verify every candidate against the query predicate,
so results always equal a brute-force scan.
"""
from __future__ import annotations

import datetime
import json
from dataclasses import dataclass, field

from .errors import NotFoundError, UnsupportedOperationError, ValidationError
from . import geometry
from .model import InfrastructureNetwork, Point2D, chain_of

TEMPORAL_RANKS = {"year": 1, "month": 2, "day": 3}


@dataclass
class OntologyClass:
    id: str
    name: str
    parent: str | None = None
    kind: str = "domain"  # domain | spatial | temporal


@dataclass
class OntologyInstance:
    id: str
    class_id: str
    label: str = ""
    spatial_footprint: dict | None = None
    temporal_extent: tuple | None = None
    payload_ref: str | None = None


@dataclass
class InstanceMapping:
    domain_instance_id: str
    st_instance_id: str
    relation: str  # within | overlaps
    confidence: float


class OntologyGraph:
    def __init__(self, kind: str = "domain"):
        self.kind = kind
        self.classes: dict[str, OntologyClass] = {}
        self.instances: dict[str, OntologyInstance] = {}
        self.footprint_refs: dict[str, dict] = {}

    def class_of(self, class_id: str) -> OntologyClass:
        try:
            return self.classes[class_id]
        except KeyError:
            raise NotFoundError(f"unknown class {class_id!r}") from None

    def instance(self, instance_id: str) -> OntologyInstance:
        try:
            return self.instances[instance_id]
        except KeyError:
            raise NotFoundError(f"unknown instance {instance_id!r}") from None

    def find_instance(self, key: str) -> OntologyInstance:
        """Lookup by id first, then unique label."""
        if key in self.instances:
            return self.instances[key]
        hits = [i for i in self.instances.values() if i.label == key]
        if len(hits) == 1:
            return hits[0]
        raise NotFoundError(f"no instance with id or unique label {key!r}")

    def class_ancestors(self, class_id: str) -> list[str]:
        out = []
        current = self.class_of(class_id).parent
        while current is not None:
            out.append(current)
            current = self.class_of(current).parent
        return out

    def class_descendants(self, class_id: str) -> list[str]:
        """Breadth-first, nearest children first."""
        self.class_of(class_id)
        out = []
        frontier = [class_id]
        while frontier:
            next_frontier = []
            for cls in sorted(self.classes):
                if self.classes[cls].parent in frontier:
                    out.append(cls)
                    next_frontier.append(cls)
            frontier = next_frontier
        return out

    def instances_of_class(self, class_id: str) -> list[OntologyInstance]:
        return sorted(
            (i for i in self.instances.values() if i.class_id == class_id),
            key=lambda i: i.id,
        )


def load_ontology(document) -> OntologyGraph:
    """Parse and validate an ontology JSON document.

    Checks: parent links are acyclic and resolve, every instance's class
    exists, temporal classes are restricted to the year/month/day
    hierarchy (finer resolutions are rejected).
    """
    if isinstance(document, (str, bytes)):
        document = json.loads(document)
    graph = OntologyGraph(kind=document.get("kind", "domain"))
    for item in document.get("classes", []):
        cls = OntologyClass(
            id=item["id"],
            name=item.get("name", item["id"]),
            parent=item.get("parent"),
            kind=item.get("kind", "domain"),
        )
        if cls.id in graph.classes:
            raise ValidationError(f"duplicate class id {cls.id!r}")
        graph.classes[cls.id] = cls

    for cls in graph.classes.values():
        if cls.parent is not None and cls.parent not in graph.classes:
            raise ValidationError(f"class {cls.id!r} has unknown parent {cls.parent!r}")
        if cls.kind == "temporal" and cls.name.lower() not in TEMPORAL_RANKS:
            raise ValidationError(
                f"temporal class {cls.name!r} not supported; hierarchy is year/month/day"
            )

    # cycle check: walk up from every class
    for cls in graph.classes.values():
        seen = {cls.id}
        current = cls.parent
        while current is not None:
            if current in seen:
                cycle = " -> ".join(sorted(seen | {current}))
                raise ValidationError(f"class hierarchy cycle involving {cycle}")
            seen.add(current)
            current = graph.classes[current].parent

    graph.footprint_refs = dict(document.get("footprint_refs", {}))

    for item in document.get("instances", []):
        instance = OntologyInstance(
            id=item["id"],
            class_id=item["class_id"],
            label=item.get("label", item["id"]),
            spatial_footprint=item.get("footprint"),
            temporal_extent=tuple(item["temporal_extent"]) if item.get("temporal_extent") else None,
            payload_ref=item.get("payload_ref"),
        )
        if instance.class_id not in graph.classes:
            raise ValidationError(
                f"instance {instance.id!r} has unknown class {instance.class_id!r}"
            )
        if instance.id in graph.instances:
            raise ValidationError(f"duplicate instance id {instance.id!r}")
        graph.instances[instance.id] = instance
    return graph


def resolve_footprint(instance: OntologyInstance, graph: OntologyGraph, network: InfrastructureNetwork | None = None):
    """Geometry of an instance: inline polygon, footprint ref, or payload entity."""
    fp = instance.spatial_footprint
    if fp is not None:
        if "polygon" in fp:
            rings = fp["polygon"]
            return geometry.MultiPolygonGeometry(
                polygons=[geometry.PolygonGeometry.from_rings(rings[0], rings[1:])]
            )
        if "multipolygon" in fp:
            return geometry.MultiPolygonGeometry(
                polygons=[
                    geometry.PolygonGeometry.from_rings(rings[0], rings[1:])
                    for rings in fp["multipolygon"]
                ]
            )
        if "ref" in fp:
            ref = graph.footprint_refs.get(fp["ref"])
            if ref is None:
                raise NotFoundError(f"unknown footprint ref {fp['ref']!r}")
            return resolve_footprint(
                OntologyInstance(id=instance.id, class_id=instance.class_id, spatial_footprint=ref),
                graph,
                network,
            )
        if "point" in fp:
            return Point2D(fp["point"][0], fp["point"][1])
    if instance.payload_ref and network is not None:
        ref = instance.payload_ref
        if ref in network.nodes:
            return network.nodes[ref].position
        if ref in network.edges:
            return chain_of(network.edges[ref], network)
        if ref in network.footprints:
            return network.footprints[ref].geometry
    return None


# -- temporal helpers -----------------------------------------------------------


def parse_period(text: str) -> tuple[datetime.date, datetime.date]:
    """Expand "2015" / "2015-03" / "2015-03-14" to an inclusive date range."""
    parts = str(text).split("-")
    try:
        if len(parts) == 1:
            year = int(parts[0])
            return datetime.date(year, 1, 1), datetime.date(year, 12, 31)
        if len(parts) == 2:
            year, month = int(parts[0]), int(parts[1])
            if month == 12:
                end = datetime.date(year, 12, 31)
            else:
                end = datetime.date(year, month + 1, 1) - datetime.timedelta(days=1)
            return datetime.date(year, month, 1), end
        if len(parts) == 3:
            day = datetime.date(int(parts[0]), int(parts[1]), int(parts[2]))
            return day, day
    except ValueError as exc:
        raise ValidationError(f"bad period {text!r}: {exc}") from exc
    raise ValidationError(f"bad period {text!r}")


def expand_interval(interval) -> tuple[datetime.date, datetime.date]:
    start, _ = parse_period(interval[0])
    _, end = parse_period(interval[1])
    if start > end:
        raise ValidationError(f"interval {interval!r} is reversed")
    return start, end


def intervals_overlap(a, b) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


def interval_within(inner, outer) -> bool:
    return outer[0] <= inner[0] and inner[1] <= outer[1]


# -- instance matching -----------------------------------------------------------


def _spatial_relation(domain_geom, spatial_geom, eps):
    """(relation, confidence) of a domain geometry against a spatial polygon."""
    if isinstance(domain_geom, Point2D):
        if geometry.predicate(domain_geom, spatial_geom, "within", eps):
            return ("within", 1.0)
        return None
    if isinstance(domain_geom, (list, tuple)):
        if geometry.predicate(domain_geom, spatial_geom, "within", eps):
            return ("within", 1.0)
        if geometry.predicate(domain_geom, spatial_geom, "intersects", eps):
            total = geometry.chain_length(domain_geom)
            if total <= 0:
                return None
            inside = sum(
                geometry.chain_length_inside(domain_geom, poly, eps)
                for poly in _polygons_of(spatial_geom)
            )
            confidence = max(min(inside / total, 1.0), 0.0)
            if confidence <= 0.0:
                confidence = 1e-6  # touching contact
            return ("overlaps", confidence)
        return None
    if isinstance(domain_geom, (geometry.PolygonGeometry, geometry.MultiPolygonGeometry)):
        if geometry.predicate(domain_geom, spatial_geom, "within", eps):
            return ("within", 1.0)
        if geometry.predicate(domain_geom, spatial_geom, "intersects", eps):
            return ("overlaps", _area_fraction_inside(domain_geom, spatial_geom, eps))
        return None
    return None


def _polygons_of(geom):
    if isinstance(geom, geometry.MultiPolygonGeometry):
        return geom.polygons
    return [geom]


def _area_fraction_inside(domain_geom, spatial_geom, eps, grid: int = 20) -> float:
    """Deterministic sampling estimate of the area fraction of a inside b."""
    polys = _polygons_of(domain_geom)
    mp_a = geometry.MultiPolygonGeometry(polygons=list(polys))
    mp_b = (
        spatial_geom
        if isinstance(spatial_geom, geometry.MultiPolygonGeometry)
        else geometry.MultiPolygonGeometry(polygons=[spatial_geom])
    )
    minx, miny, maxx, maxy = mp_a.bbox()
    inside_a = inside_both = 0
    for i in range(grid):
        for j in range(grid):
            x = minx + (i + 0.5) * (maxx - minx) / grid
            y = miny + (j + 0.5) * (maxy - miny) / grid
            p = Point2D(x, y)
            if geometry.multipolygon_contains(p, mp_a, eps):
                inside_a += 1
                if geometry.multipolygon_contains(p, mp_b, eps):
                    inside_both += 1
    if inside_a == 0:
        return 1e-6
    fraction = inside_both / inside_a
    return min(max(fraction, 1e-6), 1.0)


def match_instances(
    domain_ontology: OntologyGraph,
    st_ontology: OntologyGraph,
    network: InfrastructureNetwork | None = None,
    eps: float = 1e-9,
    warnings: list | None = None,
) -> list[InstanceMapping]:
    """Materialize domain-instance to spatio-temporal-instance mappings.

    Spatial: containment gives (within, 1.0); boundary-crossing gives
    (overlaps, fraction of the domain footprint inside). Temporal works
    the same over date intervals. Spatial instances without a resolvable
    footprint are skipped with a warning.
    """
    mappings: list[InstanceMapping] = []
    spatial_instances = []
    temporal_instances = []
    for instance in sorted(st_ontology.instances.values(), key=lambda i: i.id):
        cls = st_ontology.class_of(instance.class_id)
        if cls.kind == "spatial":
            footprint = resolve_footprint(instance, st_ontology, network)
            if footprint is None:
                if warnings is not None:
                    warnings.append(f"spatial instance {instance.id} has no footprint; skipped")
                continue
            spatial_instances.append((instance, footprint))
        elif cls.kind == "temporal":
            if instance.temporal_extent is None:
                if warnings is not None:
                    warnings.append(f"temporal instance {instance.id} has no extent; skipped")
                continue
            temporal_instances.append((instance, expand_interval(instance.temporal_extent)))

    for domain_instance in sorted(domain_ontology.instances.values(), key=lambda i: i.id):
        geom = resolve_footprint(domain_instance, domain_ontology, network)
        if geom is not None:
            for st_instance, footprint in spatial_instances:
                relation = _spatial_relation(geom, footprint, eps)
                if relation is not None:
                    mappings.append(
                        InstanceMapping(
                            domain_instance_id=domain_instance.id,
                            st_instance_id=st_instance.id,
                            relation=relation[0],
                            confidence=relation[1],
                        )
                    )
        if domain_instance.temporal_extent is not None:
            extent = expand_interval(domain_instance.temporal_extent)
            span = (extent[1] - extent[0]).days + 1
            for st_instance, st_extent in temporal_instances:
                if interval_within(extent, st_extent):
                    mappings.append(
                        InstanceMapping(domain_instance.id, st_instance.id, "within", 1.0)
                    )
                elif intervals_overlap(extent, st_extent):
                    overlap_start = max(extent[0], st_extent[0])
                    overlap_end = min(extent[1], st_extent[1])
                    overlap_days = (overlap_end - overlap_start).days + 1
                    mappings.append(
                        InstanceMapping(
                            domain_instance.id,
                            st_instance.id,
                            "overlaps",
                            max(min(overlap_days / span, 1.0), 1e-6),
                        )
                    )
    return mappings


def resolve_hierarchy(
    st_ontology: OntologyGraph,
    instance_id: str,
    direction: str,
    network: InfrastructureNetwork | None = None,
) -> list[OntologyInstance]:
    """Instances up or down the hierarchy that contain / are contained by this one.

    Walks parent links at the class level, projects each ancestor or
    descendant class to its instances, and keeps those whose footprint
    (or temporal extent) contains, resp. lies within, the given
    instance's. Ordered root-first.
    """
    if direction not in ("ancestors", "descendants"):
        raise ValidationError(f"direction must be ancestors or descendants, got {direction!r}")
    instance = st_ontology.instance(instance_id)
    cls = st_ontology.class_of(instance.class_id)

    own_geom = resolve_footprint(instance, st_ontology, network)
    own_extent = (
        expand_interval(instance.temporal_extent) if instance.temporal_extent else None
    )

    def related(candidate: OntologyInstance, as_ancestor: bool) -> bool:
        if cls.kind == "temporal" or st_ontology.class_of(candidate.class_id).kind == "temporal":
            if own_extent is None or candidate.temporal_extent is None:
                return False
            candidate_extent = expand_interval(candidate.temporal_extent)
            if as_ancestor:
                return interval_within(own_extent, candidate_extent)
            return interval_within(candidate_extent, own_extent)
        candidate_geom = resolve_footprint(candidate, st_ontology, network)
        if own_geom is None or candidate_geom is None:
            return False
        try:
            if as_ancestor:
                return geometry.predicate(own_geom, candidate_geom, "within")
            return geometry.predicate(candidate_geom, own_geom, "within")
        except UnsupportedOperationError:
            return False

    if direction == "ancestors":
        chain = st_ontology.class_ancestors(instance.class_id)  # nearest first
        ordered_classes = chain[::-1]  # root first
        as_ancestor = True
    else:
        ordered_classes = st_ontology.class_descendants(instance.class_id)
        as_ancestor = False

    out = []
    for class_id in ordered_classes:
        for candidate in st_ontology.instances_of_class(class_id):
            if candidate.id == instance_id:
                continue
            if related(candidate, as_ancestor):
                out.append(candidate)
    return out


# -- integrated queries ------------------------------------------------------------


@dataclass
class RegionTimeQuery:
    region: object  # bbox tuple | GeoJSON-ish dict | {"instance": id} | geometry
    layer_kinds: tuple = ()
    interval: tuple | None = None
    predicate: str = "within"

    def __post_init__(self):
        if self.predicate not in ("within", "crosses", "intersects"):
            raise ValidationError(f"unsupported query predicate {self.predicate!r}")
        if not self.layer_kinds:
            raise ValueError("layer_kinds must not be empty")


@dataclass
class QueryResult:
    revision: int
    layers: dict = field(default_factory=dict)  # layer_id -> list of feature dicts
    denied_layers: list = field(default_factory=list)

    def feature_ids(self, layer_id: str) -> list[str]:
        return sorted(f["id"] for f in self.layers.get(layer_id, []))


def resolve_region(region, st_ontology: OntologyGraph | None = None, network=None):
    """Normalize a query region to polygon geometry."""
    if isinstance(region, (geometry.PolygonGeometry, geometry.MultiPolygonGeometry)):
        return region
    if isinstance(region, dict) and "instance" in region:
        if st_ontology is None:
            raise NotFoundError("named region given but no spatio-temporal ontology loaded")
        instance = st_ontology.find_instance(region["instance"])
        footprint = resolve_footprint(instance, st_ontology, network)
        if footprint is None:
            raise NotFoundError(f"instance {instance.id!r} has no footprint")
        return footprint
    if isinstance(region, dict) and region.get("type") in ("Polygon", "MultiPolygon"):
        coords = region["coordinates"]
        if region["type"] == "Polygon":
            coords = [coords]
        return geometry.MultiPolygonGeometry(
            polygons=[geometry.PolygonGeometry.from_rings(r[0], r[1:]) for r in coords]
        )
    if isinstance(region, (list, tuple)) and len(region) == 4:
        minx, miny, maxx, maxy = (float(v) for v in region)
        if not (maxx > minx and maxy > miny):
            raise ValidationError("bbox region is degenerate")
        ring = [(minx, miny), (maxx, miny), (maxx, maxy), (minx, maxy), (minx, miny)]
        return geometry.PolygonGeometry.from_rings(ring)
    raise ValidationError(f"unsupported region specification {region!r}")


def _entity_geometry(network, entity_id):
    if entity_id in network.nodes:
        return network.nodes[entity_id].position
    if entity_id in network.edges:
        return chain_of(network.edges[entity_id], network)
    if entity_id in network.footprints:
        return network.footprints[entity_id].geometry
    return None


def _entity_interval(network, entity_id, layer):
    attributes = None
    if entity_id in network.nodes:
        attributes = network.nodes[entity_id].attributes
    elif entity_id in network.edges:
        attributes = network.edges[entity_id].attributes
    elif entity_id in network.footprints:
        attributes = network.footprints[entity_id].attributes
    if attributes and "valid_from" in attributes and "valid_to" in attributes:
        return expand_interval((attributes["valid_from"], attributes["valid_to"]))
    if layer.valid_interval:
        return expand_interval(layer.valid_interval)
    return None


def feature_matches(network, entity_id, layer, region_geom, query: RegionTimeQuery, eps=1e-9) -> bool:
    """Predicate + interval verification of one candidate entity."""
    geom = _entity_geometry(network, entity_id)
    if geom is None:
        return False
    try:
        if not geometry.predicate(geom, region_geom, query.predicate, eps):
            return False
    except UnsupportedOperationError:
        return False  # e.g. crosses over a point feature: never true
    if query.interval is not None:
        entity_interval = _entity_interval(network, entity_id, layer)
        if entity_interval is None:
            return True  # untimed data matches any interval
        return intervals_overlap(entity_interval, expand_interval(query.interval))
    return True


def _feature_dict(network, entity_id, ledger=None):
    from . import ingest  # local import; ingest pulls in geometry only

    if entity_id in network.nodes:
        node = network.nodes[entity_id]
        props = dict(sorted(node.attributes.items()))
        flags = ingest._flags_payload(ledger, entity_id, node)
        if flags:
            props[ingest.FLAGS_PROPERTY] = flags
        return {
            "type": "Feature",
            "id": entity_id,
            "geometry": {"type": "Point", "coordinates": [node.position.x, node.position.y]},
            "properties": props,
        }
    if entity_id in network.edges:
        edge = network.edges[entity_id]
        props = dict(sorted(edge.attributes.items()))
        flags = ingest._flags_payload(ledger, entity_id)
        if flags:
            props[ingest.FLAGS_PROPERTY] = flags
        pts = chain_of(edge, network)
        return {
            "type": "Feature",
            "id": entity_id,
            "geometry": {"type": "LineString", "coordinates": [[p.x, p.y] for p in pts]},
            "properties": props,
        }
    footprint = network.footprints[entity_id]
    rings = footprint.geometry.canonical_rings()
    geom = (
        {"type": "Polygon", "coordinates": rings[0]}
        if len(rings) == 1
        else {"type": "MultiPolygon", "coordinates": rings}
    )
    return {
        "type": "Feature",
        "id": entity_id,
        "geometry": geom,
        "properties": dict(sorted(footprint.attributes.items())),
    }


def integrated_query(
    query: RegionTimeQuery,
    network: InfrastructureNetwork,
    st_ontology: OntologyGraph | None = None,
    domain_ontologies: tuple = (),
    mappings: list | None = None,
    authorize=None,
    ledger=None,
) -> QueryResult:
    """Cross-layer region/time query with per-layer access control.

    Candidates come from instance mappings (named-instance regions over
    instance-backed layers) plus a padded spatial-index sweep; every
    candidate is then verified against the predicate and interval, so the
    result set equals a brute-force scan. Layers the caller may not read
    are omitted with a denial notice.
    """
    region_geom = resolve_region(query.region, st_ontology, network)
    result = QueryResult(revision=network.revision)

    requested = [
        layer for layer in sorted(network.layers.values(), key=lambda l: l.id)
        if layer.kind in query.layer_kinds
    ]

    mapped_refs: set[str] = set()
    if mappings and isinstance(query.region, dict) and "instance" in query.region and st_ontology:
        target = st_ontology.find_instance(query.region["instance"])
        relevant_st = {target.id}
        relevant_st.update(i.id for i in resolve_hierarchy(st_ontology, target.id, "descendants", network))
        by_id = {}
        for ontology in domain_ontologies:
            by_id.update(ontology.instances)
        for mapping in mappings:
            if mapping.st_instance_id in relevant_st:
                instance = by_id.get(mapping.domain_instance_id)
                if instance is not None and instance.payload_ref:
                    mapped_refs.add(instance.payload_ref)

    bbox = region_geom.bbox()
    for layer in requested:
        if authorize is not None:
            verdict = authorize(layer)
            if verdict is not True:
                result.denied_layers.append(
                    {"layer_id": layer.id, "reason": verdict if isinstance(verdict, str) else "denied"}
                )
                continue
        candidates = set()
        for node in network.layer_nodes(layer.id):
            p = node.position
            if bbox[0] <= p.x <= bbox[2] and bbox[1] <= p.y <= bbox[3]:
                candidates.add(node.id)
        for edge in network.layer_edges(layer.id):
            pts = chain_of(edge, network)
            ebox = (
                min(p.x for p in pts), min(p.y for p in pts),
                max(p.x for p in pts), max(p.y for p in pts),
            )
            if not _bbox_disjoint(ebox, bbox):
                candidates.add(edge.id)
        for footprint in network.layer_footprints(layer.id):
            if not _bbox_disjoint(footprint.geometry.bbox(), bbox):
                candidates.add(footprint.id)
        for ref in mapped_refs:
            if ref in network.nodes and network.nodes[ref].layer_id == layer.id:
                candidates.add(ref)
            elif ref in network.edges and network.edges[ref].layer_id == layer.id:
                candidates.add(ref)
            elif ref in network.footprints and network.footprints[ref].layer_id == layer.id:
                candidates.add(ref)

        matched = [
            entity_id
            for entity_id in sorted(candidates)
            if feature_matches(network, entity_id, layer, region_geom, query)
        ]
        result.layers[layer.id] = [_feature_dict(network, eid, ledger) for eid in matched]
    return result


def _bbox_disjoint(a, b) -> bool:
    return a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1]


def impact_query(
    network: InfrastructureNetwork,
    census_layer_id: str,
    pipe_edge_id: str,
    attribute_key: str,
):
    """Census blocks containing or crossed by a pipe edge, plus attribute sum."""
    network.layer(census_layer_id)
    edge = network.edge(pipe_edge_id)
    pipe_chain = chain_of(edge, network)

    blocks = []
    total = 0
    for footprint in sorted(network.layer_footprints(census_layer_id), key=lambda f: f.id):
        hit = geometry.predicate(pipe_chain, footprint.geometry, "within") or geometry.predicate(
            pipe_chain, footprint.geometry, "crosses"
        )
        if not hit:
            continue
        value = footprint.attributes.get(attribute_key)
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise TypeError(
                f"attribute {attribute_key!r} of block {footprint.id} is not numeric: {value!r}"
            )
        blocks.append(footprint.id)
        total += value
    return blocks, total
