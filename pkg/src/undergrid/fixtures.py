"""Campus-style demo dataset: input files exercising every repair rule.

The scene packs the classic conversion defects into a small map: a
duplicate node pair where two pipe chains meet (the path across them is
broken until merged), a 12-node circle drawn for a manhole, a severed
main whose reconnection runs along a street, a degree-1 valve, a building
whose boundary does not close, plus census blocks and ontologies for
integrated and impact queries.
"""
from __future__ import annotations

import json
import math
import os

CIRCLE_CENTER = (150.0, 100.0)
CIRCLE_RADIUS = 1.0


def _circle_nodes():
    out = []
    for k in range(12):
        angle = math.radians(k * 30.0)
        out.append(
            (
                f"mh_{k:02d}",
                CIRCLE_CENTER[0] + CIRCLE_RADIUS * math.cos(angle),
                CIRCLE_CENTER[1] + CIRCLE_RADIUS * math.sin(angle),
            )
        )
    return out


def pipes_tables() -> tuple[str, str]:
    """nodes.csv / edges.csv content for the pipes layer."""
    nodes = [
        ("pa1", 0.0, 0.0, "", ""),
        ("pd1", 50.0, 0.0, "", ""),
        ("pd2", 50.0, 0.0, "", ""),
        ("pa3", 100.0, 0.0, "", ""),
        ("pb1", 150.0, 0.0, "", ""),
        ("pb2", 200.0, 0.0, "", ""),
        ("pb3", 200.0, 100.0, "", ""),
        ("pw1", 0.0, 100.0, "", ""),
        ("pw2", 100.0, 100.0, "", ""),
        ("vv1", 50.0, 30.0, "valve", ""),
        ("ps_lib", 50.0, -40.0, "", ""),
    ]
    for nid, x, y in _circle_nodes():
        nodes.append((nid, x, y, "", ""))

    edges = [
        ("ea1", "pa1", "pd1", "cast_iron", "2015-03", "2015-03"),
        ("ea2", "pd2", "pa3", "cast_iron", "2015-03", "2015-03"),
        ("eb1", "pb1", "pb2", "pvc", "2015-06", "2015-06"),
        ("eb2", "pb2", "pb3", "pvc", "2015-06", "2015-06"),
        ("eb3", "pb3", "mh_00", "pvc", "2015-06", "2015-06"),
        ("ev1", "pd2", "vv1", "cast_iron", "2015-03", "2015-03"),
        ("ew1", "pw1", "pw2", "steel", "2016-01", "2016-01"),
        ("ew2", "pw2", "mh_06", "steel", "2016-01", "2016-01"),
        ("es1", "pd2", "ps_lib", "copper", "2015-03", "2015-03"),
    ]
    circle = _circle_nodes()
    for k in range(12):
        edges.append(
            (f"em_{k:02d}", circle[k][0], circle[(k + 1) % 12][0], "", "", "")
        )

    node_lines = ["id,x,y,type,note"]
    node_lines += [f"{nid},{x},{y},{t},{note}" for nid, x, y, t, note in nodes]
    edge_lines = ["id,node_a,node_b,material,valid_from,valid_to"]
    edge_lines += [
        f"{eid},{a},{b},{mat},{vf},{vt}" for eid, a, b, mat, vf, vt in edges
    ]
    return "\n".join(node_lines) + "\n", "\n".join(edge_lines) + "\n"


def streets_geojson() -> dict:
    lines = {
        "st_south": [[0.0, 0.0], [200.0, 0.0]],
        "st_north": [[0.0, 100.0], [200.0, 100.0]],
        "st_west": [[0.0, 0.0], [0.0, 100.0]],
        "st_mid": [[100.0, 0.0], [100.0, 100.0]],
        "st_east": [[200.0, 0.0], [200.0, 100.0]],
    }
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "id": fid,
                "geometry": {"type": "LineString", "coordinates": coords},
                "properties": {"name": fid},
            }
            for fid, coords in lines.items()
        ],
    }


def buildings_geojson() -> dict:
    # hall: boundary graph with the west wall missing (needs repair)
    walls = {
        "bw_south": [[20.0, 40.0], [60.0, 40.0]],
        "bw_east": [[60.0, 40.0], [60.0, 60.0]],
        "bw_north": [[60.0, 60.0], [20.0, 60.0]],
    }
    features = [
        {
            "type": "Feature",
            "id": fid,
            "geometry": {"type": "LineString", "coordinates": coords},
            "properties": {"building": "hall"},
        }
        for fid, coords in walls.items()
    ]
    features.append(
        {
            "type": "Feature",
            "id": "bf_library",
            "geometry": {
                "type": "Polygon",
                "coordinates": [
                    [[20.0, -60.0], [80.0, -60.0], [80.0, -20.0], [20.0, -20.0], [20.0, -60.0]]
                ],
            },
            "properties": {"building": "library"},
        }
    )
    return {"type": "FeatureCollection", "features": features}


def census_geojson() -> dict:
    blocks = [
        ("cb_west", [[-10.0, -80.0], [100.0, -80.0], [100.0, 130.0], [-10.0, 130.0], [-10.0, -80.0]], 120, 300),
        ("cb_east", [[100.0, -80.0], [220.0, -80.0], [220.0, 130.0], [100.0, 130.0], [100.0, -80.0]], 80, 150),
    ]
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "id": fid,
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {"low_income": low, "households": hh},
            }
            for fid, ring, low, hh in blocks
        ],
    }


def st_ontology() -> dict:
    campus_ring = [[-20.0, -90.0], [230.0, -90.0], [230.0, 140.0], [-20.0, 140.0], [-20.0, -90.0]]
    west_ring = [[-10.0, -80.0], [100.0, -80.0], [100.0, 130.0], [-10.0, 130.0], [-10.0, -80.0]]
    east_ring = [[100.0, -80.0], [220.0, -80.0], [220.0, 130.0], [100.0, 130.0], [100.0, -80.0]]
    return {
        "kind": "spatiotemporal",
        "classes": [
            {"id": "campus_cls", "name": "Campus", "kind": "spatial"},
            {"id": "zone_cls", "name": "Zone", "parent": "campus_cls", "kind": "spatial"},
            {"id": "year_cls", "name": "Year", "kind": "temporal"},
            {"id": "month_cls", "name": "Month", "parent": "year_cls", "kind": "temporal"},
        ],
        "instances": [
            {"id": "inst_campus", "class_id": "campus_cls", "label": "Campus", "footprint": {"polygon": [campus_ring]}},
            {"id": "inst_zone_west", "class_id": "zone_cls", "label": "West Zone", "footprint": {"polygon": [west_ring]}},
            {"id": "inst_zone_east", "class_id": "zone_cls", "label": "East Zone", "footprint": {"polygon": [east_ring]}},
            {"id": "inst_2015", "class_id": "year_cls", "label": "2015", "temporal_extent": ["2015", "2015"]},
            {"id": "inst_2016", "class_id": "year_cls", "label": "2016", "temporal_extent": ["2016", "2016"]},
            {"id": "inst_2015_03", "class_id": "month_cls", "label": "2015-03", "temporal_extent": ["2015-03", "2015-03"]},
            {"id": "inst_2015_06", "class_id": "month_cls", "label": "2015-06", "temporal_extent": ["2015-06", "2015-06"]},
        ],
    }


def pipes_ontology() -> dict:
    return {
        "kind": "domain",
        "classes": [
            {"id": "water_net", "name": "WaterNetwork", "kind": "domain"},
            {"id": "pipe_cls", "name": "Pipe", "parent": "water_net", "kind": "domain"},
        ],
        "instances": [
            {"id": "dom_ea1", "class_id": "pipe_cls", "label": "Main A-1", "payload_ref": "ea1", "temporal_extent": ["2015-03", "2015-03"]},
            {"id": "dom_ea2", "class_id": "pipe_cls", "label": "Main A-2", "payload_ref": "ea2", "temporal_extent": ["2015-03", "2015-03"]},
            {"id": "dom_eb1", "class_id": "pipe_cls", "label": "Main B-1", "payload_ref": "eb1", "temporal_extent": ["2015-06", "2015-06"]},
            {"id": "dom_eb2", "class_id": "pipe_cls", "label": "Main B-2", "payload_ref": "eb2", "temporal_extent": ["2015-06", "2015-06"]},
            {"id": "dom_ew1", "class_id": "pipe_cls", "label": "North main", "payload_ref": "ew1", "temporal_extent": ["2016-01", "2016-01"]},
        ],
    }


def pipeline_config(base_dir: str, output_dir: str | None = None) -> dict:
    return {
        "epsilon": 0.01,
        "seed": 42,
        "output_dir": output_dir or os.path.join(base_dir, "out"),
        "layers": [
            {
                "id": "streets",
                "name": "Streets",
                "kind": "streets",
                "sensitivity": "public",
                "format": "geojson",
                "path": os.path.join(base_dir, "streets.geojson"),
            },
            {
                "id": "pipes",
                "name": "Water Pipes",
                "kind": "pipes",
                "sensitivity": "sensitive",
                "temporal_resolution": "month",
                "format": "tables",
                "nodes_path": os.path.join(base_dir, "pipes_nodes.csv"),
                "edges_path": os.path.join(base_dir, "pipes_edges.csv"),
            },
            {
                "id": "buildings",
                "name": "Buildings",
                "kind": "buildings",
                "sensitivity": "public",
                "format": "geojson",
                "path": os.path.join(base_dir, "buildings.geojson"),
            },
            {
                "id": "census",
                "name": "Census Blocks",
                "kind": "census",
                "sensitivity": "public",
                "format": "geojson",
                "path": os.path.join(base_dir, "census.geojson"),
            },
        ],
        "rules": {
            "pipes_layer": "pipes",
            "streets_layer": "streets",
            "buildings_layer": "buildings",
            "inference": {"search_radius": 50.0, "corridor_half_width": 8.0},
            "symbol": {"max_radius": 3.0, "min_nodes": 6, "radial_tolerance": 0.05},
        },
        "ontologies": {
            "spatiotemporal": os.path.join(base_dir, "ontology_st.json"),
            "domains": [os.path.join(base_dir, "ontology_pipes.json")],
        },
        "service": {
            "listen": "127.0.0.1:8787",
            "area_cap_km2": 25.0,
            "tokens": {
                "tok-admin": "admin",
                "tok-planner": "planner",
                "tok-crew": "crew",
            },
        },
    }


def write_fixture(base_dir: str, output_dir: str | None = None) -> str:
    """Write the demo input files; returns the config path."""
    os.makedirs(base_dir, exist_ok=True)
    nodes_csv, edges_csv = pipes_tables()
    with open(os.path.join(base_dir, "pipes_nodes.csv"), "w", encoding="utf-8") as fh:
        fh.write(nodes_csv)
    with open(os.path.join(base_dir, "pipes_edges.csv"), "w", encoding="utf-8") as fh:
        fh.write(edges_csv)
    for name, payload in (
        ("streets.geojson", streets_geojson()),
        ("buildings.geojson", buildings_geojson()),
        ("census.geojson", census_geojson()),
        ("ontology_st.json", st_ontology()),
        ("ontology_pipes.json", pipes_ontology()),
    ):
        with open(os.path.join(base_dir, name), "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
    config = pipeline_config(base_dir, output_dir)
    config_path = os.path.join(base_dir, "config.json")
    with open(config_path, "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
    return config_path
