import math
import random

import pytest

from undergrid.errors import AuthorizationError, ConflictError
from undergrid.geometry import MultiPolygonGeometry, PolygonGeometry, polygonize_layer
from undergrid.model import apply_edit, node_degree
from undergrid.repair import (
    FlagLedger,
    apply_suggestion,
    audit_unflagged_mutations,
    check_valve_degree,
    detect_dangling_ends,
    detect_duplicate_nodes,
    detect_symbol_circles,
    infer_missing_edges,
    merge_duplicate_nodes,
    repair_building_boundaries,
    resolve_flag,
    revert_suggestion,
)

from conftest import make_network, put_cycle, put_edge, put_node


def square_footprint(x0, y0, x1, y1):
    return MultiPolygonGeometry(
        polygons=[PolygonGeometry.from_rings([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])]
    )


# -- duplicate nodes ---------------------------------------------------------


def test_two_colocated_nodes_one_flag(pipes_network):
    put_node(pipes_network, "a", 10, 10)
    put_node(pipes_network, "b", 10, 10)
    ledger = FlagLedger()
    flags = detect_duplicate_nodes(pipes_network, "pipes", ledger)
    assert len(flags) == 1
    assert flags[0].rule == "duplicate_nodes"
    suggestion = ledger.suggestion(flags[0].suggestion_id)
    assert suggestion.payload["node_ids"] == ["a", "b"]
    assert suggestion.payload["survivor"] == "a"


def test_nodes_one_meter_apart_not_flagged(pipes_network):
    put_node(pipes_network, "a", 0, 0)
    put_node(pipes_network, "b", 1, 0)
    ledger = FlagLedger()
    assert detect_duplicate_nodes(pipes_network, "pipes", ledger) == []


def test_three_colocated_nodes_pairwise_flags_one_suggestion(pipes_network):
    for nid in ("a", "b", "c"):
        put_node(pipes_network, nid, 5, 5)
    put_node(pipes_network, "far", 50, 50)
    ledger = FlagLedger()
    flags = detect_duplicate_nodes(pipes_network, "pipes", ledger)
    # oracle: O(n^2) scan over all pairs
    nodes = list(pipes_network.nodes.values())
    expected_pairs = sum(
        1
        for i, m in enumerate(nodes)
        for n in nodes[i + 1:]
        if m.position.distance_to(n.position) <= pipes_network.epsilon
    )
    assert len(flags) == expected_pairs == 3
    assert len({f.suggestion_id for f in flags}) == 1


def test_merge_repoints_edges_and_restores_path(pipes_network):
    put_node(pipes_network, "x", 0, 0)
    put_node(pipes_network, "a", 10, 0)
    put_node(pipes_network, "b", 10, 0)
    put_node(pipes_network, "y", 20, 0)
    put_edge(pipes_network, "e1", "x", "a")
    put_edge(pipes_network, "e2", "b", "y")
    ledger = FlagLedger()
    flags = detect_duplicate_nodes(pipes_network, "pipes", ledger)
    suggestion = ledger.suggestion(flags[0].suggestion_id)
    apply_suggestion(pipes_network, ledger, suggestion)
    assert "b" not in pipes_network.nodes
    # path x -> y exists through the survivor
    assert pipes_network.neighbors("x") == {"a"}
    assert pipes_network.neighbors("y") == {"a"}


def test_merge_without_incident_edges_removes_node(pipes_network):
    put_node(pipes_network, "a", 1, 1)
    put_node(pipes_network, "b", 1, 1)
    ledger = FlagLedger()
    flags = detect_duplicate_nodes(pipes_network, "pipes", ledger)
    suggestion = ledger.suggestion(flags[0].suggestion_id)
    batch = merge_duplicate_nodes(pipes_network, suggestion)
    apply_edit(pipes_network, batch)
    assert "b" not in pipes_network.nodes and "a" in pipes_network.nodes


def test_merge_collapses_parallel_edges(pipes_network):
    put_node(pipes_network, "a", 0, 0)
    put_node(pipes_network, "b", 0, 0)
    put_node(pipes_network, "c", 10, 0)
    put_edge(pipes_network, "e1", "a", "c")
    put_edge(pipes_network, "e2", "b", "c")
    ledger = FlagLedger()
    flags = detect_duplicate_nodes(pipes_network, "pipes", ledger)
    suggestion = ledger.suggestion(flags[0].suggestion_id)
    apply_suggestion(pipes_network, ledger, suggestion)
    # oracle: adjacency set has exactly one a-c edge
    pairs = [frozenset((e.endpoint_a, e.endpoint_b)) for e in pipes_network.edges.values()]
    assert pairs == [frozenset(("a", "c"))]
    assert any("parallel" in n for n in suggestion.payload.get("notes", []))


def test_merge_collapses_self_loop_between_duplicates(pipes_network):
    put_node(pipes_network, "a", 0, 0)
    put_node(pipes_network, "b", 0, 0)
    put_edge(pipes_network, "e", "a", "b")
    ledger = FlagLedger()
    flags = detect_duplicate_nodes(pipes_network, "pipes", ledger)
    suggestion = ledger.suggestion(flags[0].suggestion_id)
    apply_suggestion(pipes_network, ledger, suggestion)
    assert len(pipes_network.edges) == 0
    assert any("self-loop" in n for n in suggestion.payload.get("notes", []))


def test_merge_attribute_conflict_survivor_wins(pipes_network):
    put_node(pipes_network, "a", 0, 0, material="iron")
    put_node(pipes_network, "b", 0, 0, material="pvc", depth=2)
    ledger = FlagLedger()
    flags = detect_duplicate_nodes(pipes_network, "pipes", ledger)
    suggestion = ledger.suggestion(flags[0].suggestion_id)
    apply_suggestion(pipes_network, ledger, suggestion)
    assert pipes_network.nodes["a"].attributes == {"material": "iron", "depth": 2}
    assert any("conflict" in n for n in suggestion.payload.get("notes", []))


def test_detect_merge_detect_idempotent(pipes_network):
    for nid in ("a", "b"):
        put_node(pipes_network, nid, 3, 3)
    ledger = FlagLedger()
    flags = detect_duplicate_nodes(pipes_network, "pipes", ledger)
    apply_suggestion(pipes_network, ledger, ledger.suggestion(flags[0].suggestion_id))
    assert detect_duplicate_nodes(pipes_network, "pipes", ledger) == []


# -- symbol circles ----------------------------------------------------------------


def test_twelve_node_circle_with_attachment_detected(pipes_network):
    node_ids, _ = put_cycle(pipes_network, "c", (50, 50), 1.0, 12)
    put_node(pipes_network, "ext", 60, 50)
    put_edge(pipes_network, "att", node_ids[0], "ext")
    ledger = FlagLedger()
    flags = detect_symbol_circles(pipes_network, "pipes", ledger)
    assert len(flags) == 1
    suggestion = ledger.suggestion(flags[0].suggestion_id)
    assert len(suggestion.payload["attachments"]) == 1
    cx, cy = suggestion.payload["centroid"]
    assert (cx, cy) == pytest.approx((50.0, 50.0), abs=1e-9)


def test_four_node_square_not_detected(pipes_network):
    put_cycle(pipes_network, "s", (0, 0), 1.0, 4)
    ledger = FlagLedger()
    assert detect_symbol_circles(pipes_network, "pipes", ledger) == []


def test_ellipse_not_detected(pipes_network):
    # 2:1 ellipse: radial deviation far beyond 5%
    for k in range(12):
        angle = 2 * math.pi * k / 12
        put_node(pipes_network, f"el{k:02d}", 2.0 * math.cos(angle), 1.0 * math.sin(angle))
    for k in range(12):
        put_edge(pipes_network, f"ee{k:02d}", f"el{k:02d}", f"el{(k + 1) % 12:02d}")
    # oracle: compute the deviation the detector should see
    positions = [pipes_network.nodes[f"el{k:02d}"].position for k in range(12)]
    cx = sum(p.x for p in positions) / 12
    cy = sum(p.y for p in positions) / 12
    radii = [math.hypot(p.x - cx, p.y - cy) for p in positions]
    mean = sum(radii) / 12
    assert max(abs(r - mean) for r in radii) > 0.05 * mean
    ledger = FlagLedger()
    assert detect_symbol_circles(pipes_network, "pipes", ledger) == []


def test_large_circle_beyond_max_radius_not_detected(pipes_network):
    put_cycle(pipes_network, "big", (0, 0), 10.0, 12)
    ledger = FlagLedger()
    assert detect_symbol_circles(pipes_network, "pipes", ledger, max_radius=3.0) == []


def test_replace_symbol_preserves_attachments(pipes_network):
    node_ids, _ = put_cycle(pipes_network, "c", (100, 100), 1.0, 12)
    # external pipes approach the symbol radially from outside
    for i, (k, nid) in enumerate(((0, node_ids[0]), (4, node_ids[4]), (8, node_ids[8]))):
        angle = 2 * math.pi * k / 12
        put_node(pipes_network, f"ext{i}", 100 + 20 * math.cos(angle), 100 + 20 * math.sin(angle))
        put_edge(pipes_network, f"att{i}", nid, f"ext{i}")
    ledger = FlagLedger()
    flags = detect_symbol_circles(pipes_network, "pipes", ledger)
    suggestion = ledger.suggestion(flags[0].suggestion_id)
    apply_suggestion(pipes_network, ledger, suggestion)

    center_id = suggestion.payload["new_node_id"]
    center = pipes_network.nodes[center_id]
    assert center.attributes["Is_manhole"] == 1
    assert center.position.distance_to(
        type(center.position)(100, 100)
    ) < 1e-9
    assert pipes_network.neighbors(center_id) == {"ext0", "ext1", "ext2"}
    for nid in node_ids:
        assert nid not in pipes_network.nodes
    # re-detection yields nothing
    assert detect_symbol_circles(pipes_network, "pipes", ledger) == []


def test_replace_symbol_zero_attachments(pipes_network):
    put_cycle(pipes_network, "c", (5, 5), 1.0, 8)
    ledger = FlagLedger()
    flags = detect_symbol_circles(pipes_network, "pipes", ledger)
    suggestion = ledger.suggestion(flags[0].suggestion_id)
    apply_suggestion(pipes_network, ledger, suggestion)
    center_id = suggestion.payload["new_node_id"]
    assert node_degree(pipes_network, center_id) == 0
    assert pipes_network.nodes[center_id].attributes["Is_manhole"] == 1


def test_replace_symbol_stale_cycle_conflicts(pipes_network):
    node_ids, edge_ids = put_cycle(pipes_network, "c", (5, 5), 1.0, 8)
    ledger = FlagLedger()
    flags = detect_symbol_circles(pipes_network, "pipes", ledger)
    suggestion = ledger.suggestion(flags[0].suggestion_id)
    from undergrid.model import remove_edge

    apply_edit(pipes_network, [remove_edge(edge_ids[0])])
    with pytest.raises(ConflictError):
        apply_suggestion(pipes_network, ledger, suggestion)


# -- dangling ends / valves -----------------------------------------------------------


def test_dangling_end_in_open_street_flagged(pipes_network):
    put_node(pipes_network, "a", 0, 0)
    put_node(pipes_network, "b", 10, 0)
    put_edge(pipes_network, "e", "a", "b")
    ledger = FlagLedger()
    flags = detect_dangling_ends(pipes_network, "pipes", square_footprint(100, 100, 110, 110), ledger)
    assert sorted(f.target for f in flags) == ["a", "b"]


def test_dangling_end_inside_building_exempt(pipes_network):
    put_node(pipes_network, "inside", 5, 5)
    put_node(pipes_network, "street", 50, 5)
    put_edge(pipes_network, "e", "inside", "street")
    ledger = FlagLedger()
    flags = detect_dangling_ends(pipes_network, "pipes", square_footprint(0, 0, 10, 10), ledger)
    assert [f.target for f in flags] == ["street"]


def test_dangling_end_on_building_boundary_exempt(pipes_network):
    put_node(pipes_network, "wall", 10, 5)  # exactly on the footprint edge
    put_node(pipes_network, "street", 50, 5)
    put_edge(pipes_network, "e", "wall", "street")
    ledger = FlagLedger()
    flags = detect_dangling_ends(pipes_network, "pipes", square_footprint(0, 0, 10, 10), ledger)
    assert [f.target for f in flags] == ["street"]


def test_degree_two_node_not_dangling(pipes_network):
    for nid, x in (("a", 0), ("b", 10), ("c", 20)):
        put_node(pipes_network, nid, x, 0)
    put_edge(pipes_network, "e1", "a", "b")
    put_edge(pipes_network, "e2", "b", "c")
    ledger = FlagLedger()
    flags = detect_dangling_ends(pipes_network, "pipes", square_footprint(100, 100, 110, 110), ledger)
    assert sorted(f.target for f in flags) == ["a", "c"]


def test_valve_degree_rule(pipes_network):
    put_node(pipes_network, "v1", 0, 0, type="valve")
    put_node(pipes_network, "v2", 10, 0, type="valve")
    put_node(pipes_network, "n1", 5, 0)
    put_node(pipes_network, "n2", 10, 5)
    put_edge(pipes_network, "e1", "v1", "n1")
    put_edge(pipes_network, "e2", "v2", "n1")
    put_edge(pipes_network, "e3", "v2", "n2")
    ledger = FlagLedger()
    flags = check_valve_degree(pipes_network, "pipes", ledger)
    assert [f.target for f in flags] == ["v1"]  # degree 1; v2 has 2; n1 is no valve


# -- inference ------------------------------------------------------------------------


def build_street_scene():
    network = make_network(layers=("pipes", "streets"))
    put_node(network, "sa", -10, 0, layer="streets")
    put_node(network, "sb", 110, 0, layer="streets")
    put_edge(network, "st", "sa", "sb", layer="streets")
    # pipe chain with a missing middle piece along the street
    for nid, x in (("p1", 0), ("p2", 40), ("p3", 60), ("p4", 100)):
        put_node(network, nid, x, 0)
    put_edge(network, "e1", "p1", "p2")
    put_edge(network, "e3", "p3", "p4")
    return network


def test_inference_reconnects_along_street():
    network = build_street_scene()
    ledger = FlagLedger()
    detect_dangling_ends(network, "pipes", square_footprint(500, 500, 510, 510), ledger)
    suggestions = infer_missing_edges(
        network, "pipes", streets_layer_id="streets", ledger=ledger
    )
    pairs = {(s.payload["node_a"], s.payload["node_b"]) for s in suggestions}
    assert ("p2", "p3") in pairs
    # mutual pair produced exactly one suggestion
    assert len([s for s in suggestions if set((s.payload["node_a"], s.payload["node_b"])) == {"p2", "p3"}]) == 1


def test_corridor_suppresses_offstreet_diagonal():
    network = make_network(layers=("pipes", "streets"))
    put_node(network, "sa", -10, 0, layer="streets")
    put_node(network, "sb", 110, 0, layer="streets")
    put_edge(network, "st", "sa", "sb", layer="streets")
    put_node(network, "p1", 0, 0)
    put_node(network, "p2", 30, 0)
    put_edge(network, "e1", "p1", "p2")
    put_node(network, "off1", 45, 30)
    put_node(network, "off2", 50, 34)
    put_edge(network, "eo", "off1", "off2")

    without = infer_missing_edges(network, "pipes", dangling_ids=["p2", "off1"])
    pairs_without = {(s.payload["node_a"], s.payload["node_b"]) for s in without}
    assert ("off1", "p2") in pairs_without  # diagonal picked with no constraint

    with_streets = infer_missing_edges(
        network, "pipes", streets_layer_id="streets", dangling_ids=["p2", "off1"]
    )
    pairs_with = {(s.payload["node_a"], s.payload["node_b"]) for s in with_streets}
    assert ("off1", "p2") not in pairs_with  # corridor kills it


def test_inference_no_candidate_within_radius(pipes_network):
    put_node(pipes_network, "a", 0, 0)
    put_node(pipes_network, "b", 10, 0)
    put_edge(pipes_network, "e", "a", "b")
    put_node(pipes_network, "far1", 500, 0)
    put_node(pipes_network, "far2", 510, 0)
    put_edge(pipes_network, "e2", "far1", "far2")
    suggestions = infer_missing_edges(pipes_network, "pipes", dangling_ids=["a"], search_radius=50)
    assert suggestions == []


def test_inference_rejects_bad_params(pipes_network):
    with pytest.raises(ValueError):
        infer_missing_edges(pipes_network, "pipes", dangling_ids=[], search_radius=0)
    with pytest.raises(ValueError):
        infer_missing_edges(pipes_network, "pipes", dangling_ids=[], corridor_half_width=-1)


# -- building boundary repair ------------------------------------------------------------


def broken_square_network():
    network = make_network(layers=("buildings",))
    coords = {"a": (0, 0), "b": (10, 0), "c": (10, 10), "d": (0, 10)}
    for nid, (x, y) in coords.items():
        put_node(network, nid, x, y, layer="buildings")
    put_edge(network, "e1", "a", "b", layer="buildings")
    put_edge(network, "e2", "b", "c", layer="buildings")
    put_edge(network, "e3", "c", "d", layer="buildings")
    return network


def test_boundary_repair_closes_square():
    network = broken_square_network()
    ledger = FlagLedger()
    before_polys, before_open = polygonize_layer(network, "buildings")
    suggestions = repair_building_boundaries(network, "buildings", ledger, open_node_ids=before_open)
    assert {("a", "d")} <= {(s.payload["node_a"], s.payload["node_b"]) for s in suggestions}
    for suggestion in suggestions:
        apply_suggestion(network, ledger, suggestion)
    after_polys, after_open = polygonize_layer(network, "buildings")
    assert len(after_polys.polygons) > len(before_polys.polygons) or len(after_open) < len(before_open)
    assert len(after_polys.polygons) >= 1


def test_boundary_repair_noop_on_closed_layer():
    network = make_network(layers=("buildings",))
    put_cycle(network, "sq", (0, 0), 5.0, 4, layer="buildings")
    ledger = FlagLedger()
    _, open_nodes = polygonize_layer(network, "buildings")
    assert open_nodes == []
    assert repair_building_boundaries(network, "buildings", ledger, open_node_ids=open_nodes) == []


def test_two_broken_squares_connect_within_themselves():
    network = make_network(layers=("buildings",))
    for base, offset in (("p", 0.0), ("q", 100.0)):
        coords = [(0, 0), (10, 0), (10, 10), (0, 10)]
        ids = []
        for i, (x, y) in enumerate(coords):
            nid = f"{base}{i}"
            put_node(network, nid, x + offset, y, layer="buildings")
            ids.append(nid)
        for i in range(3):
            put_edge(network, f"{base}e{i}", ids[i], ids[i + 1], layer="buildings")
    ledger = FlagLedger()
    _, open_nodes = polygonize_layer(network, "buildings")
    suggestions = repair_building_boundaries(network, "buildings", ledger, open_node_ids=open_nodes)
    # nearest-node oracle: gap closers stay within each square
    pairs = {(s.payload["node_a"], s.payload["node_b"]) for s in suggestions}
    assert ("p0", "p3") in pairs
    assert ("q0", "q3") in pairs
    for a, b in pairs:
        assert a[0] == b[0]  # no suggestion crosses between the squares


# -- resolution ---------------------------------------------------------------------------


def test_accept_inferred_edge_persists():
    network = build_street_scene()
    ledger = FlagLedger()
    detect_dangling_ends(network, "pipes", square_footprint(500, 500, 510, 510), ledger)
    infer_missing_edges(network, "pipes", streets_layer_id="streets", ledger=ledger)
    flag = ledger.open_flags("inferred_edge")[0]
    resolve_flag(network, ledger, flag.id, "accepted", actor="crew")
    suggestion = ledger.suggestion(flag.suggestion_id)
    assert suggestion.applied
    assert suggestion.payload["edge_id"] in network.edges
    assert ledger.flag(flag.id).status == "accepted"


def test_reject_applied_merge_restores_duplicates(pipes_network):
    put_node(pipes_network, "x", 0, 0)
    put_node(pipes_network, "a", 10, 0, material="iron")
    put_node(pipes_network, "b", 10, 0, material="pvc")
    put_node(pipes_network, "y", 20, 0)
    put_edge(pipes_network, "e1", "x", "a")
    put_edge(pipes_network, "e2", "b", "y")
    ledger = FlagLedger()
    flags = detect_duplicate_nodes(pipes_network, "pipes", ledger)
    snapshot = pipes_network.serialize()
    revision = pipes_network.revision
    suggestion = ledger.suggestion(flags[0].suggestion_id)
    apply_suggestion(pipes_network, ledger, suggestion)
    assert "b" not in pipes_network.nodes

    resolve_flag(pipes_network, ledger, flags[0].id, "rejected", actor="admin")
    # snapshot-diff oracle: graph identical up to the revision counter
    restored = pipes_network.snapshot()
    restored.revision = revision
    assert restored.serialize() == snapshot
    assert ledger.flag(flags[0].id).status == "rejected"
    assert not suggestion.applied


def test_double_resolution_conflicts(pipes_network):
    put_node(pipes_network, "a", 0, 0)
    ledger = FlagLedger()
    flag = ledger.add_flag(target="a", rule="dangling_end")
    resolve_flag(pipes_network, ledger, flag.id, "accepted", actor="crew")
    with pytest.raises(ConflictError):
        resolve_flag(pipes_network, ledger, flag.id, "rejected", actor="crew")


def test_resident_cannot_resolve(pipes_network):
    ledger = FlagLedger()
    flag = ledger.add_flag(target="a", rule="dangling_end")
    with pytest.raises(AuthorizationError):
        resolve_flag(pipes_network, ledger, flag.id, "accepted", actor="public")


def test_sibling_flags_resolve_together(pipes_network):
    for nid in ("a", "b", "c"):
        put_node(pipes_network, nid, 7, 7)
    ledger = FlagLedger()
    flags = detect_duplicate_nodes(pipes_network, "pipes", ledger)
    assert len(flags) == 3
    resolve_flag(pipes_network, ledger, flags[0].id, "accepted", actor="crew")
    assert all(ledger.flag(f.id).status == "accepted" for f in flags)


def test_rejected_suggestions_not_regenerated(pipes_network):
    put_node(pipes_network, "a", 0, 0)
    put_node(pipes_network, "b", 0, 0)
    ledger = FlagLedger()
    flags = detect_duplicate_nodes(pipes_network, "pipes", ledger)
    resolve_flag(pipes_network, ledger, flags[0].id, "rejected", actor="crew")
    assert detect_duplicate_nodes(pipes_network, "pipes", ledger) == []


def test_audit_finds_no_unflagged_mutations(pipes_network):
    put_node(pipes_network, "a", 0, 0)
    put_node(pipes_network, "b", 0, 0)
    ledger = FlagLedger()
    flags = detect_duplicate_nodes(pipes_network, "pipes", ledger)
    apply_suggestion(pipes_network, ledger, ledger.suggestion(flags[0].suggestion_id))
    assert audit_unflagged_mutations(ledger) == []


def test_merge_property_randomized_layers():
    """Randomized co-location clusters: merged layers hold the epsilon and
    reachability properties (small version of the acceptance sweep)."""
    rng = random.Random(4242)
    for trial in range(25):
        network = make_network()
        ledger = FlagLedger()
        positions = {}
        nid = 0
        # sprinkle isolated positions
        spots = []
        while len(spots) < rng.randint(3, 8):
            candidate = (rng.uniform(0, 100), rng.uniform(0, 100))
            if all(math.hypot(candidate[0] - s[0], candidate[1] - s[1]) > 1.0 for s in spots):
                spots.append(candidate)
        for x, y in spots:
            for _ in range(rng.randint(1, 3)):
                name = f"n{nid:03d}"
                put_node(network, name, x, y)
                positions[name] = (x, y)
                nid += 1
        names = sorted(positions)
        for i in range(rng.randint(0, 12)):
            a, b = rng.sample(names, 2)
            if positions[a] != positions[b]:
                put_edge(network, f"e{i:03d}", a, b)

        # contracted-graph oracle BEFORE merging
        def canon(name):
            return positions[name]

        adjacency = {}
        for e in network.edges.values():
            adjacency.setdefault(canon(e.endpoint_a), set()).add(canon(e.endpoint_b))
            adjacency.setdefault(canon(e.endpoint_b), set()).add(canon(e.endpoint_a))

        def component(start):
            seen = {start}
            stack = [start]
            while stack:
                for nxt in adjacency.get(stack.pop(), ()):
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
            return seen

        flags = detect_duplicate_nodes(network, "pipes", ledger)
        for sid in sorted({f.suggestion_id for f in flags}):
            suggestion = ledger.suggestion(sid)
            apply_suggestion(network, ledger, suggestion)

        nodes = list(network.nodes.values())
        for i, m in enumerate(nodes):
            for n in nodes[i + 1:]:
                assert m.position.distance_to(n.position) > network.epsilon
        # reachability: contracted components still connected in merged graph
        for spot_a in adjacency:
            comp = component(spot_a)
            survivors = [n.id for n in nodes if (n.position.x, n.position.y) in comp]
            if len(survivors) <= 1:
                continue
            seen = {survivors[0]}
            stack = [survivors[0]]
            while stack:
                for nxt in network.neighbors(stack.pop()):
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
            assert set(survivors) <= seen
