"""Planar geometry kernel: containment tests, predicates, grid index, faces.

Everything is exact-enough float math on projected coordinates; robust
exact arithmetic is out of scope. Boundary proximity is resolved first
with an epsilon test, so the winding-number core never has to classify a
point that sits on a ring.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import median

from .errors import NotFoundError, UnsupportedOperationError, ValidationError
from .model import InfrastructureNetwork, Point2D, chain_of

INSIDE = "inside"
ON_BOUNDARY = "on_boundary"
OUTSIDE = "outside"

#: geometric tolerance for boundary classification, meters
BOUNDARY_EPS = 1e-9
#: area below which a ring is considered degenerate (collinear), m^2
DEGENERATE_AREA = 1e-12


def _pt(p) -> Point2D:
    if isinstance(p, Point2D):
        return p
    return Point2D(float(p[0]), float(p[1]))


def _close_ring(vertices: list[Point2D]) -> list[Point2D]:
    if vertices and vertices[0].distance_to(vertices[-1]) > 0:
        return vertices + [vertices[0]]
    return list(vertices)


def ring_signed_area(ring: list[Point2D]) -> float:
    """Shoelace signed area; positive for counter-clockwise rings."""
    area = 0.0
    for a, b in zip(ring, ring[1:]):
        area += a.x * b.y - b.x * a.y
    return area / 2.0


@dataclass
class PolygonGeometry:
    """Simple polygon with optional holes.

    The outer ring is stored closed and counter-clockwise, holes closed
    and clockwise; ``from_rings`` normalizes whatever orientation it gets.
    """

    outer_ring: list = field(default_factory=list)
    holes: list = field(default_factory=list)

    @classmethod
    def from_rings(cls, outer, holes=()) -> "PolygonGeometry":
        ring = _close_ring([_pt(v) for v in outer])
        cls._validate_ring(ring)
        if ring_signed_area(ring) < 0:
            ring = ring[::-1]
        fixed_holes = []
        for hole in holes:
            h = _close_ring([_pt(v) for v in hole])
            cls._validate_ring(h)
            if ring_signed_area(h) > 0:
                h = h[::-1]
            fixed_holes.append(h)
        return cls(outer_ring=ring, holes=fixed_holes)

    @staticmethod
    def _validate_ring(ring: list[Point2D]) -> None:
        distinct = {(v.x, v.y) for v in ring}
        if len(distinct) < 3:
            raise ValidationError(f"ring needs >= 3 distinct vertices, got {len(distinct)}")
        if abs(ring_signed_area(ring)) <= DEGENERATE_AREA:
            raise ValidationError("degenerate (collinear) ring")

    def rings(self) -> list[list[Point2D]]:
        return [self.outer_ring] + list(self.holes)

    def bbox(self) -> tuple[float, float, float, float]:
        xs = [v.x for v in self.outer_ring]
        ys = [v.y for v in self.outer_ring]
        return (min(xs), min(ys), max(xs), max(ys))

    def area(self) -> float:
        total = ring_signed_area(self.outer_ring)
        for hole in self.holes:
            total += ring_signed_area(hole)  # holes are CW, negative
        return total


@dataclass
class MultiPolygonGeometry:
    polygons: list = field(default_factory=list)

    @classmethod
    def from_polygons(cls, polygons) -> "MultiPolygonGeometry":
        return cls(polygons=list(polygons))

    def bbox(self):
        boxes = [p.bbox() for p in self.polygons]
        if not boxes:
            return (0.0, 0.0, 0.0, 0.0)
        return (
            min(b[0] for b in boxes),
            min(b[1] for b in boxes),
            max(b[2] for b in boxes),
            max(b[3] for b in boxes),
        )

    def canonical_rings(self) -> list:
        return [
            [[[v.x, v.y] for v in ring] for ring in poly.rings()]
            for poly in self.polygons
        ]


# -- scalar helpers ----------------------------------------------------------


def point_to_segment_distance(p: Point2D, a: Point2D, b: Point2D) -> float:
    dx, dy = b.x - a.x, b.y - a.y
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return p.distance_to(a)
    t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / seg2
    t = max(0.0, min(1.0, t))
    return math.hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy))


def distance_point_to_chain(p: Point2D, chain: list) -> float:
    """Minimum distance from a point to a polyline of >= 2 vertices."""
    if len(chain) < 2:
        raise ValueError("chain needs at least 2 vertices")
    pts = [_pt(v) for v in chain]
    return min(
        point_to_segment_distance(_pt(p), a, b) for a, b in zip(pts, pts[1:])
    )


def chain_length(chain: list) -> float:
    pts = [_pt(v) for v in chain]
    return sum(a.distance_to(b) for a, b in zip(pts, pts[1:]))


def _is_left(p: Point2D, a: Point2D, b: Point2D) -> float:
    return (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)


def _winding_number(p: Point2D, ring: list[Point2D]) -> int:
    wn = 0
    for a, b in zip(ring, ring[1:]):
        if a.y <= p.y:
            if b.y > p.y and _is_left(p, a, b) > 0:
                wn += 1
        elif b.y <= p.y and _is_left(p, a, b) < 0:
            wn -= 1
    return wn


def _on_ring(p: Point2D, ring: list[Point2D], eps: float) -> bool:
    return any(
        point_to_segment_distance(p, a, b) <= eps for a, b in zip(ring, ring[1:])
    )


def point_in_polygon(p, poly: PolygonGeometry, eps: float = BOUNDARY_EPS) -> str:
    """Classify a point against a polygon: inside / on_boundary / outside.

    Points within ``eps`` of any ring segment classify as on_boundary; the
    interior test itself is a winding-number pass with the half-open edge
    rule, which is deterministic on vertex-aligned rays.
    """
    point = _pt(p)
    for ring in poly.rings():
        PolygonGeometry._validate_ring(ring)
        if _on_ring(point, ring, eps):
            return ON_BOUNDARY
    if _winding_number(point, poly.outer_ring) == 0:
        return OUTSIDE
    for hole in poly.holes:
        if _winding_number(point, hole) != 0:
            return OUTSIDE
    return INSIDE


def multipolygon_contains(p, mp: MultiPolygonGeometry, eps: float = BOUNDARY_EPS) -> bool:
    """True iff the point is inside or on the boundary of any constituent.

    Single pass over the polygons; equivalent to running the per-polygon
    loop and or-ing the results.
    """
    point = _pt(p)
    for poly in mp.polygons:
        if point_in_polygon(point, poly, eps) != OUTSIDE:
            return True
    return False


# -- segment intersections ---------------------------------------------------


def _segment_intersection_params(p1, p2, q1, q2):
    """Return (t, u) with t,u in [0,1] for a proper crossing, else None.

    Collinear overlaps return None; the sampling-based classification
    around vertices takes care of those.
    """
    rx, ry = p2.x - p1.x, p2.y - p1.y
    sx, sy = q2.x - q1.x, q2.y - q1.y
    denom = rx * sy - ry * sx
    if denom == 0.0:
        return None
    qpx, qpy = q1.x - p1.x, q1.y - p1.y
    t = (qpx * sy - qpy * sx) / denom
    u = (qpx * ry - qpy * rx) / denom
    if -1e-12 <= t <= 1.0 + 1e-12 and -1e-12 <= u <= 1.0 + 1e-12:
        return (min(max(t, 0.0), 1.0), min(max(u, 0.0), 1.0))
    return None


def _chain_polygon_split_points(chain: list[Point2D], poly: PolygonGeometry):
    """Per chain segment: sorted parameters where the segment meets a ring."""
    all_rings = poly.rings()
    per_segment = []
    for a, b in zip(chain, chain[1:]):
        ts = {0.0, 1.0}
        for ring in all_rings:
            for r1, r2 in zip(ring, ring[1:]):
                hit = _segment_intersection_params(a, b, r1, r2)
                if hit is not None:
                    ts.add(hit[0])
        per_segment.append(sorted(ts))
    return per_segment


def _classify_chain_pieces(chain: list[Point2D], poly: PolygonGeometry, eps: float):
    """Yield (classification, length) for each boundary-free piece of the chain."""
    split = _chain_polygon_split_points(chain, poly)
    for (a, b), ts in zip(zip(chain, chain[1:]), split):
        for t0, t1 in zip(ts, ts[1:]):
            if t1 - t0 <= 1e-12:
                continue
            tm = (t0 + t1) / 2.0
            mid = Point2D(a.x + tm * (b.x - a.x), a.y + tm * (b.y - a.y))
            piece_len = a.distance_to(b) * (t1 - t0)
            yield point_in_polygon(mid, poly, eps), piece_len


def chain_length_inside(chain: list, poly: PolygonGeometry, eps: float = BOUNDARY_EPS) -> float:
    """Total chain length strictly inside (or on the boundary of) the polygon."""
    pts = [_pt(v) for v in chain]
    return sum(
        length
        for cls, length in _classify_chain_pieces(pts, poly, eps)
        if cls != OUTSIDE
    )


def _bbox_of_chain(chain: list[Point2D]):
    xs = [v.x for v in chain]
    ys = [v.y for v in chain]
    return (min(xs), min(ys), max(xs), max(ys))


def _bboxes_disjoint(a, b, pad=0.0) -> bool:
    return (
        a[2] + pad < b[0] or b[2] + pad < a[0] or a[3] + pad < b[1] or b[3] + pad < a[1]
    )


def _describe(g) -> str:
    if isinstance(g, Point2D):
        return "point"
    if isinstance(g, PolygonGeometry):
        return "polygon"
    if isinstance(g, MultiPolygonGeometry):
        return "multipolygon"
    if isinstance(g, (list, tuple)):
        return "chain"
    return type(g).__name__


def _chain_predicate(chain: list[Point2D], poly: PolygonGeometry, op: str, eps: float) -> bool:
    if _bboxes_disjoint(_bbox_of_chain(chain), poly.bbox()):
        return False if op in ("within", "crosses", "intersects") else True
    classes = [cls for cls, _ in _classify_chain_pieces(chain, poly, eps)]
    vertex_classes = [point_in_polygon(v, poly, eps) for v in chain]
    has_inside = INSIDE in classes or INSIDE in vertex_classes
    has_outside = OUTSIDE in classes
    has_any_contact = has_inside or ON_BOUNDARY in classes or ON_BOUNDARY in vertex_classes
    if op == "within":
        return not has_outside and OUTSIDE not in vertex_classes
    if op == "crosses":
        return has_inside and has_outside
    if op == "intersects":
        return has_any_contact
    raise UnsupportedOperationError(f"unknown predicate op {op!r}")


def _rings_cross(a: PolygonGeometry, b: PolygonGeometry) -> bool:
    for ring_a in a.rings():
        for r1, r2 in zip(ring_a, ring_a[1:]):
            for ring_b in b.rings():
                for q1, q2 in zip(ring_b, ring_b[1:]):
                    hit = _segment_intersection_params(r1, r2, q1, q2)
                    if hit is not None and 1e-9 < hit[0] < 1 - 1e-9 and 1e-9 < hit[1] < 1 - 1e-9:
                        return True
    return False


def _polygon_predicate(a: PolygonGeometry, b: PolygonGeometry, op: str, eps: float) -> bool:
    if op == "within":
        if _bboxes_disjoint(a.bbox(), b.bbox()):
            return False
        vertex_ok = all(
            point_in_polygon(v, b, eps) != OUTSIDE for v in a.outer_ring
        )
        return vertex_ok and not _rings_cross(a, b)
    if op == "intersects":
        if _bboxes_disjoint(a.bbox(), b.bbox()):
            return False
        if any(point_in_polygon(v, b, eps) != OUTSIDE for v in a.outer_ring):
            return True
        if any(point_in_polygon(v, a, eps) != OUTSIDE for v in b.outer_ring):
            return True
        return _rings_cross(a, b)
    if op == "crosses":
        raise UnsupportedOperationError("crosses is not defined for polygon/polygon")
    raise UnsupportedOperationError(f"unknown predicate op {op!r}")


def predicate(a, b, op: str, eps: float = BOUNDARY_EPS) -> bool:
    """Simple-features-style spatial predicate for the supported pairs.

    Supported: point/polygon, chain/polygon, polygon/polygon (and the
    multipolygon variants of the right-hand side). within(a, b) is always
    contains(b, a); boundary contact counts as containment.
    """
    if op == "contains":
        return predicate(b, a, "within", eps)
    if op not in ("within", "crosses", "intersects"):
        raise UnsupportedOperationError(f"unknown predicate op {op!r}")

    if isinstance(b, MultiPolygonGeometry):
        if op == "within":
            return any(predicate(a, poly, "within", eps) for poly in b.polygons)
        if op == "intersects":
            return any(predicate(a, poly, "intersects", eps) for poly in b.polygons)
        # crosses: inside w.r.t. the union, outside w.r.t. the union
        if isinstance(a, (list, tuple)):
            chain = [_pt(v) for v in a]
            has_inside = any(
                _chain_predicate(chain, poly, "intersects", eps) for poly in b.polygons
            )
            outside_all = _chain_has_point_outside_all(chain, b.polygons, eps)
            return has_inside and outside_all
        raise UnsupportedOperationError(
            f"unsupported geometry pair ({_describe(a)}, multipolygon) for crosses"
        )

    if not isinstance(b, PolygonGeometry):
        raise UnsupportedOperationError(
            f"unsupported geometry pair ({_describe(a)}, {_describe(b)})"
        )

    if isinstance(a, Point2D):
        if op == "within":
            return point_in_polygon(a, b, eps) != OUTSIDE
        if op == "intersects":
            return point_in_polygon(a, b, eps) != OUTSIDE
        raise UnsupportedOperationError("crosses is not defined for point/polygon")
    if isinstance(a, (list, tuple)):
        chain = [_pt(v) for v in a]
        if len(chain) < 2:
            raise ValueError("chain needs at least 2 vertices")
        return _chain_predicate(chain, b, op, eps)
    if isinstance(a, PolygonGeometry):
        return _polygon_predicate(a, b, op, eps)
    if isinstance(a, MultiPolygonGeometry):
        if op == "within":
            return all(_polygon_predicate(p, b, "within", eps) for p in a.polygons)
        if op == "intersects":
            return any(_polygon_predicate(p, b, "intersects", eps) for p in a.polygons)
        raise UnsupportedOperationError("crosses is not defined for multipolygon/polygon")
    raise UnsupportedOperationError(
        f"unsupported geometry pair ({_describe(a)}, {_describe(b)})"
    )


def _chain_has_point_outside_all(chain, polygons, eps) -> bool:
    # sample vertices and piece midpoints against the union
    samples = list(chain)
    for poly in polygons:
        split = _chain_polygon_split_points(chain, poly)
        for (a, b), ts in zip(zip(chain, chain[1:]), split):
            for t0, t1 in zip(ts, ts[1:]):
                tm = (t0 + t1) / 2.0
                samples.append(Point2D(a.x + tm * (b.x - a.x), a.y + tm * (b.y - a.y)))
    mp = MultiPolygonGeometry(polygons=list(polygons))
    return any(not multipolygon_contains(s, mp, eps) for s in samples)


# -- spatial index -------------------------------------------------------------


class SpatialIndex:
    """Uniform-grid index over (id, bbox) entries.

    Cell size defaults to twice the median entry bbox diagonal; degenerate
    cases (all points) fall back to the extent. Deterministic for a given
    entry order.
    """

    def __init__(self, cell_size: float | None = None):
        self._cells: dict[tuple[int, int], list[str]] = {}
        self._entries: dict[str, tuple[float, float, float, float]] = {}
        self._meta: dict[str, object] = {}
        self.cell_size = cell_size

    @classmethod
    def build(cls, entries, cell_size: float | None = None) -> "SpatialIndex":
        """entries: iterable of (id, bbox, meta); bbox=(minx,miny,maxx,maxy)."""
        entries = list(entries)
        if cell_size is None:
            diags = [math.hypot(b[2] - b[0], b[3] - b[1]) for _, b, _ in entries]
            cell_size = 2.0 * median(diags) if diags else 1.0
            if cell_size <= 0:
                if entries:
                    xs = [b[0] for _, b, _ in entries] + [b[2] for _, b, _ in entries]
                    ys = [b[1] for _, b, _ in entries] + [b[3] for _, b, _ in entries]
                    extent = math.hypot(max(xs) - min(xs), max(ys) - min(ys))
                    cell_size = extent / max(1.0, math.sqrt(len(entries)))
                if cell_size <= 0:
                    cell_size = 1.0
        index = cls(cell_size=cell_size)
        for entry_id, bbox, meta in entries:
            index.insert(entry_id, bbox, meta)
        return index

    def _cell(self, x: float, y: float) -> tuple[int, int]:
        return (math.floor(x / self.cell_size), math.floor(y / self.cell_size))

    def _cells_for_bbox(self, bbox):
        cx0, cy0 = self._cell(bbox[0], bbox[1])
        cx1, cy1 = self._cell(bbox[2], bbox[3])
        for cx in range(cx0, cx1 + 1):
            for cy in range(cy0, cy1 + 1):
                yield (cx, cy)

    def insert(self, entry_id: str, bbox, meta=None) -> None:
        self._entries[entry_id] = tuple(bbox)
        self._meta[entry_id] = meta
        for cell in self._cells_for_bbox(bbox):
            self._cells.setdefault(cell, []).append(entry_id)

    def __len__(self) -> int:
        return len(self._entries)

    def meta(self, entry_id: str):
        return self._meta[entry_id]

    def query_bbox(self, bbox, pad: float = 0.0) -> list[str]:
        """Ids whose bbox intersects the padded query bbox; id-sorted."""
        query = (bbox[0] - pad, bbox[1] - pad, bbox[2] + pad, bbox[3] + pad)
        seen = set()
        for cell in self._cells_for_bbox(query):
            for entry_id in self._cells.get(cell, ()):
                if entry_id in seen:
                    continue
                if not _bboxes_disjoint(self._entries[entry_id], query):
                    seen.add(entry_id)
        return sorted(seen)

    def nearest(self, point, max_radius: float, accept=None):
        """(id, distance) of the nearest accepted entry center within radius.

        Distance is to the entry bbox center: use point entries (degenerate
        bboxes) when exact nearest-node semantics are needed. Ties break
        toward the smaller id.
        """
        if max_radius < 0:
            raise ValueError("max_radius must be non-negative")
        p = _pt(point)
        best = None
        ring = 0
        center_cell = self._cell(p.x, p.y)
        max_ring = math.ceil(max_radius / self.cell_size) + 1
        while ring <= max_ring:
            candidates = []
            for cx in range(center_cell[0] - ring, center_cell[0] + ring + 1):
                for cy in range(center_cell[1] - ring, center_cell[1] + ring + 1):
                    if max(abs(cx - center_cell[0]), abs(cy - center_cell[1])) != ring:
                        continue
                    candidates.extend(self._cells.get((cx, cy), ()))
            for entry_id in sorted(set(candidates)):
                if accept is not None and not accept(entry_id):
                    continue
                bbox = self._entries[entry_id]
                center = Point2D((bbox[0] + bbox[2]) / 2.0, (bbox[1] + bbox[3]) / 2.0)
                d = p.distance_to(center)
                if d > max_radius:
                    continue
                if best is None or d < best[1] - 1e-12 or (abs(d - best[1]) <= 1e-12 and entry_id < best[0]):
                    best = (entry_id, d)
            if best is not None and best[1] <= (ring - 1) * self.cell_size:
                # no farther ring can beat the current best
                break
            ring += 1
        return best


def build_node_index(network: InfrastructureNetwork, layer_id: str | None = None) -> SpatialIndex:
    nodes = network.nodes.values()
    if layer_id is not None:
        network.layer(layer_id)
        nodes = [n for n in nodes if n.layer_id == layer_id]
    entries = [
        (n.id, (n.position.x, n.position.y, n.position.x, n.position.y), n.layer_id)
        for n in sorted(nodes, key=lambda n: n.id)
    ]
    return SpatialIndex.build(entries)


def build_edge_index(network: InfrastructureNetwork, layer_id: str) -> SpatialIndex:
    entries = []
    for edge in sorted(network.layer_edges(layer_id), key=lambda e: e.id):
        chain = chain_of(edge, network)
        entries.append((edge.id, _bbox_of_chain(chain), edge.layer_id))
    return SpatialIndex.build(entries)


def nearest_node(index: SpatialIndex, p, layer_id: str, max_radius: float):
    """Nearest node of a layer within max_radius: (node_id, distance) or None.

    Ties break toward the smaller node id, matching a full linear scan.
    """
    if max_radius < 0:
        raise ValueError("max_radius must be non-negative")
    hit = index.nearest(p, max_radius, accept=lambda nid: index.meta(nid) == layer_id)
    return hit


# -- planar faces (building polygonization) -----------------------------------


def _face_chains(network: InfrastructureNetwork, layer_id: str):
    """Trace the bounded faces of a layer's planar graph.

    Returns a list of (node_id_cycle, coordinate_ring, edge_id_cycle) for
    faces with positive area, i.e. the minimal closed cycles.
    """
    edges = sorted(network.layer_edges(layer_id), key=lambda e: e.id)
    # directed half edge: (edge_id, forward?) ; forward runs a -> b
    outgoing: dict[str, list] = {}
    chains: dict[tuple[str, bool], list[Point2D]] = {}
    for edge in edges:
        chain = chain_of(edge, network)
        chains[(edge.id, True)] = chain
        chains[(edge.id, False)] = chain[::-1]
        for forward, origin in ((True, edge.endpoint_a), (False, edge.endpoint_b)):
            c = chains[(edge.id, forward)]
            angle = math.atan2(c[1].y - c[0].y, c[1].x - c[0].x)
            outgoing.setdefault(origin, []).append((angle, edge.id, forward))
    for origin in outgoing:
        outgoing[origin].sort()

    def half_edge_target(edge_id, forward):
        e = network.edges[edge_id]
        return e.endpoint_b if forward else e.endpoint_a

    def next_half_edge(edge_id, forward):
        # at the target node, continue with the half edge clockwise-adjacent
        # to the reversal: traces faces keeping the interior on the left
        target = half_edge_target(edge_id, forward)
        candidates = outgoing[target]
        idx = next(
            i for i, (_, eid, fwd) in enumerate(candidates)
            if eid == edge_id and fwd == (not forward)
        )
        _, next_eid, next_fwd = candidates[(idx - 1) % len(candidates)]
        return next_eid, next_fwd

    faces = []
    visited: set[tuple[str, bool]] = set()
    for edge in edges:
        for forward in (True, False):
            start = (edge.id, forward)
            if start in visited:
                continue
            cycle_nodes = []
            cycle_edges = []
            ring: list[Point2D] = []
            current = start
            while True:
                visited.add(current)
                eid, fwd = current
                e = network.edges[eid]
                cycle_nodes.append(e.endpoint_a if fwd else e.endpoint_b)
                cycle_edges.append(eid)
                ring.extend(chains[current][:-1])
                current = next_half_edge(eid, fwd)
                if current == start:
                    break
                if current in visited:
                    break  # merged into an already-traced face
            if current != start:
                continue
            ring.append(ring[0])
            if ring_signed_area(ring) > DEGENERATE_AREA:
                faces.append((cycle_nodes, ring, cycle_edges))
    return faces


def polygonize_layer(network: InfrastructureNetwork, layer_id: str):
    """Assemble the layer's minimal closed cycles into polygons.

    Returns (MultiPolygonGeometry, open_boundary_node_ids): nodes of the
    layer that participate in no closed cycle are reported for repair.
    """
    faces = _face_chains(network, layer_id)
    polygons = []
    covered: set[str] = set()
    for cycle_nodes, ring, _edges in sorted(faces, key=lambda f: f[0]):
        try:
            polygons.append(PolygonGeometry.from_rings(ring))
        except ValidationError:
            continue
        covered.update(cycle_nodes)
    open_nodes = sorted(
        n.id for n in network.layer_nodes(layer_id) if n.id not in covered
    )
    return MultiPolygonGeometry(polygons=polygons), open_nodes
