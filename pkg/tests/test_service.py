import itertools
import json
import random

import pytest
from fastapi.testclient import TestClient

from undergrid.geometry import MultiPolygonGeometry, PolygonGeometry
from undergrid.model import Footprint, Layer
from undergrid.repair import FlagLedger, detect_duplicate_nodes
from undergrid.service import (
    CAPABILITIES,
    DEFAULT_GRANTS,
    ROLES,
    AccessPolicy,
    Deny,
    Session,
    Store,
    authorize,
    authorize_with,
    create_app,
)

from conftest import make_network, put_edge, put_node


def rect(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]


def build_store():
    network = make_network(layers=("pipes", "buildings"))
    network.layers["pipes"] = Layer(id="pipes", name="Pipes", kind="pipes", sensitivity="sensitive")
    put_node(network, "p1", 10, 10)
    put_node(network, "p2", 50, 10)
    put_edge(network, "pe1", "p1", "p2")
    put_node(network, "b1", 20, 20, layer="buildings")
    put_node(network, "b2", 20, 30, layer="buildings")
    put_edge(network, "be1", "b1", "b2", layer="buildings")
    network.insert_footprint(
        Footprint(
            id="bf1",
            layer_id="buildings",
            geometry=MultiPolygonGeometry(polygons=[PolygonGeometry.from_rings(rect(15, 15, 35, 35))]),
        )
    )
    store = Store(
        network,
        tokens={"tok-admin": "admin", "tok-crew": "crew", "tok-planner": "planner"},
    )
    return store


@pytest.fixture
def client():
    return TestClient(create_app(build_store()))


PIPES_SENSITIVE = Layer(id="pipes", name="P", kind="pipes", sensitivity="sensitive")
PARKS_PUBLIC = Layer(id="parks", name="K", kind="other", sensitivity="public")


def test_public_cannot_read_sensitive():
    verdict = authorize(Session("", "public"), "read_public", PIPES_SENSITIVE)
    assert isinstance(verdict, Deny)
    assert "read_sensitive" in verdict.reason


def test_crew_can_resolve_flags():
    assert authorize(Session("", "crew"), "resolve_flags", PIPES_SENSITIVE) is True


def test_admin_allowed_everything():
    for capability in CAPABILITIES:
        for layer in (PIPES_SENSITIVE, PARKS_PUBLIC):
            assert authorize(Session("", "admin"), capability, layer) is True


def test_policy_rejects_sensitive_grant_for_public():
    with pytest.raises(Exception):
        AccessPolicy(grants={"public": {("read_sensitive", "*")}})


def test_authorize_exhaustive_table():
    """Deterministic and total over role x capability x sensitivity."""
    policy = AccessPolicy()
    for role, capability, sensitivity in itertools.product(
        ROLES, CAPABILITIES, ("public", "sensitive")
    ):
        layer = Layer(id="l", name="L", kind="pipes", sensitivity=sensitivity)
        verdict = authorize_with(policy, Session("", role), capability, layer)
        required = capability
        if capability == "read_public" and sensitivity == "sensitive":
            required = "read_sensitive"
        expected = any(
            cap == required and kind in ("*", "pipes")
            for cap, kind in DEFAULT_GRANTS[role]
        )
        assert (verdict is True) == expected
        # repeat: determinism
        again = authorize_with(policy, Session("", role), capability, layer)
        assert (again is True) == (verdict is True)


def test_unknown_token_maps_to_public():
    store = build_store()
    assert store.session_for("nonsense").role == "public"
    assert store.session_for(None).role == "public"


# -- endpoints ----------------------------------------------------------------


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "ok"


def test_layers_lists_readability(client):
    response = client.get("/layers")
    body = response.json()
    readable = {l["id"]: l["readable"] for l in body["layers"]}
    assert readable == {"pipes": False, "buildings": True}
    crew = client.get("/layers", headers={"X-Session-Token": "tok-crew"}).json()
    assert all(l["readable"] for l in crew["layers"])


def test_query_crew_sees_both_layers(client):
    response = client.post(
        "/query",
        json={"region": [0, 0, 100, 100], "layer_kinds": ["pipes", "buildings"], "predicate": "within"},
        headers={"X-Session-Token": "tok-crew"},
    )
    body = response.json()
    assert response.status_code == 200
    assert set(body["layers"].keys()) == {"pipes", "buildings"}
    assert body["denied_layers"] == []
    pipe_ids = {f["id"] for f in body["layers"]["pipes"]["features"]}
    assert pipe_ids == {"p1", "p2", "pe1"}


def test_query_public_gets_denial_notice(client):
    response = client.post(
        "/query",
        json={"region": [0, 0, 100, 100], "layer_kinds": ["pipes", "buildings"]},
    )
    body = response.json()
    assert "pipes" not in body["layers"]
    assert len(body["denied_layers"]) == 1
    assert body["denied_layers"][0]["layer_id"] == "pipes"


def test_query_malformed_region_rejected(client):
    response = client.post(
        "/query",
        json={
            "region": {"type": "Polygon", "coordinates": [[[0, 0], [1, 1], [0, 0]]]},
            "layer_kinds": ["buildings"],
        },
        headers={"X-Session-Token": "tok-crew"},
    )
    assert response.status_code == 400


def test_query_area_cap_enforced(client):
    response = client.post(
        "/query",
        json={"region": [0, 0, 100000, 100000], "layer_kinds": ["buildings"]},
        headers={"X-Session-Token": "tok-crew"},
    )
    assert response.status_code == 400
    assert "cap" in response.json()["error"]


def test_query_missing_region_rejected(client):
    response = client.post("/query", json={"layer_kinds": ["buildings"]})
    assert response.status_code == 400


def test_update_crew_creates_manual_flag():
    store = build_store()
    client = TestClient(create_app(store))
    response = client.post(
        "/update",
        json={
            "actions": [
                {"kind": "add_node", "id": "p9", "x": 70.0, "y": 10.0, "layer_id": "pipes"},
                {"kind": "add_edge", "id": "pe9", "endpoint_a": "p2", "endpoint_b": "p9", "layer_id": "pipes"},
            ]
        },
        headers={"X-Session-Token": "tok-crew"},
    )
    assert response.status_code == 200
    body = response.json()
    assert body["revision"] == 1
    assert "p9" in store.network.nodes
    flag = store.ledger.flag(body["flag_id"])
    assert flag.rule == "manual"
    assert flag.status == "accepted"
    assert flag.resolved_by == "crew"


def test_update_public_denied(client):
    response = client.post(
        "/update",
        json={"actions": [{"kind": "add_node", "id": "x", "x": 0.0, "y": 0.0, "layer_id": "buildings"}]},
    )
    assert response.status_code == 403


def test_update_planner_denied(client):
    response = client.post(
        "/update",
        json={"actions": [{"kind": "add_node", "id": "x", "x": 0.0, "y": 0.0, "layer_id": "buildings"}]},
        headers={"X-Session-Token": "tok-planner"},
    )
    assert response.status_code == 403


def test_update_missing_node_rejected_atomically():
    store = build_store()
    client = TestClient(create_app(store))
    before = store.network.serialize()
    response = client.post(
        "/update",
        json={
            "actions": [
                {"kind": "add_edge", "id": "bad", "endpoint_a": "p1", "endpoint_b": "ghost", "layer_id": "pipes"}
            ]
        },
        headers={"X-Session-Token": "tok-crew"},
    )
    assert response.status_code == 400
    assert store.network.serialize() == before
    assert store.network.revision == 0


def flagged_store():
    store = build_store()
    put_node(store.network, "d1", 40, 40)
    put_node(store.network, "d2", 40, 40)
    detect_duplicate_nodes(store.network, "pipes", store.ledger)
    return store


def test_flags_filtering():
    store = flagged_store()
    client = TestClient(create_app(store))
    response = client.get(
        "/flags",
        params={"status": "open", "rule": "duplicate_nodes"},
        headers={"X-Session-Token": "tok-crew"},
    )
    flags = response.json()["flags"]
    assert len(flags) == 1
    assert flags[0]["rule"] == "duplicate_nodes"
    assert flags[0]["suggestion"]["action"] == "merge_nodes"
    none = client.get(
        "/flags", params={"rule": "symbol_circle"}, headers={"X-Session-Token": "tok-crew"}
    ).json()["flags"]
    assert none == []


def test_flags_hidden_from_public_for_sensitive_layers():
    store = flagged_store()
    client = TestClient(create_app(store))
    flags = client.get("/flags").json()["flags"]
    assert flags == []  # duplicate flag targets a sensitive pipes node


def test_flags_with_vanished_target_hidden_from_public():
    store = flagged_store()
    from undergrid.repair import apply_suggestion

    suggestion = next(iter(store.ledger.suggestions.values()))
    apply_suggestion(store.network, store.ledger, suggestion)  # d2 removed; target gone
    client = TestClient(create_app(store))
    assert client.get("/flags").json()["flags"] == []
    crew = client.get("/flags", headers={"X-Session-Token": "tok-crew"}).json()["flags"]
    assert len(crew) == 1


def test_resolve_flag_roundtrip_and_conflict():
    store = flagged_store()
    client = TestClient(create_app(store))
    flag_id = store.ledger.open_flags()[0].id
    response = client.post(
        f"/flags/{flag_id}/resolve",
        json={"decision": "accepted"},
        headers={"X-Session-Token": "tok-crew"},
    )
    assert response.status_code == 200
    assert response.json()["flag"]["status"] == "accepted"
    assert "d2" not in store.network.nodes  # merge applied

    second = client.post(
        f"/flags/{flag_id}/resolve",
        json={"decision": "accepted"},
        headers={"X-Session-Token": "tok-crew"},
    )
    assert second.status_code == 409


def test_resolve_denied_for_planner():
    store = flagged_store()
    client = TestClient(create_app(store))
    flag_id = store.ledger.open_flags()[0].id
    response = client.post(
        f"/flags/{flag_id}/resolve",
        json={"decision": "accepted"},
        headers={"X-Session-Token": "tok-planner"},
    )
    assert response.status_code == 403


def test_responses_snapshot_consistent():
    store = build_store()
    client = TestClient(create_app(store))
    body = client.post(
        "/query",
        json={"region": [0, 0, 100, 100], "layer_kinds": ["buildings"]},
    ).json()
    assert body["revision"] == store.network.revision


def test_impact_query_mode():
    store = build_store()
    store.network.add_layer(Layer(id="census", name="Census", kind="census"))
    store.network.insert_footprint(
        Footprint(
            id="cb1",
            layer_id="census",
            geometry=MultiPolygonGeometry(polygons=[PolygonGeometry.from_rings(rect(0, 0, 100, 100))]),
            attributes={"low_income": 120},
        )
    )
    client = TestClient(create_app(store))
    response = client.post(
        "/query",
        json={"impact": {"edge_id": "pe1", "census_layer": "census", "attribute_key": "low_income"}},
        headers={"X-Session-Token": "tok-crew"},
    )
    assert response.status_code == 200
    body = response.json()
    assert body["blocks"] == ["cb1"]
    assert body["total"] == 120
    # public cannot run impact over a sensitive pipe
    denied = client.post(
        "/query",
        json={"impact": {"edge_id": "pe1", "census_layer": "census", "attribute_key": "low_income"}},
    )
    assert denied.status_code == 403
    missing = client.post(
        "/query",
        json={"impact": {"edge_id": "ghost", "census_layer": "census", "attribute_key": "low_income"}},
        headers={"X-Session-Token": "tok-crew"},
    )
    assert missing.status_code == 404


def test_mappings_rebuild_on_revision_change():
    from undergrid.ontology import load_ontology

    store = build_store()
    store.st_ontology = load_ontology(
        {
            "kind": "spatiotemporal",
            "classes": [{"id": "zone", "name": "Zone", "kind": "spatial"}],
            "instances": [
                {"id": "z1", "class_id": "zone", "footprint": {"polygon": [rect(0, 0, 100, 100)]}}
            ],
        }
    )
    store.domain_ontologies = (
        load_ontology(
            {
                "kind": "domain",
                "classes": [{"id": "pipe", "name": "Pipe", "kind": "domain"}],
                "instances": [{"id": "d1", "class_id": "pipe", "payload_ref": "pe1"}],
            }
        ),
    )
    first = store.mappings()
    assert [m.domain_instance_id for m in first] == ["d1"]
    assert store.mappings() is first  # cached at the same revision
    client = TestClient(create_app(store))
    client.post(
        "/update",
        json={"actions": [{"kind": "add_node", "id": "zz", "x": 1.0, "y": 1.0, "layer_id": "buildings"}]},
        headers={"X-Session-Token": "tok-crew"},
    )
    assert store.mappings() is not first  # revision moved, mappings rebuilt


def test_no_sensitive_leak_fuzz():
    """Random roles and regions: no response ever names a sensitive feature
    to a session that cannot read it (scaled-down acceptance fuzz)."""
    store = build_store()
    client = TestClient(create_app(store))
    sensitive_ids = {"p1", "p2", "pe1"}
    rng = random.Random(5150)
    tokens = {"": "public", "tok-crew": "crew", "tok-admin": "admin", "tok-planner": "planner", "bogus": "public"}
    leaks = 0
    for _ in range(200):
        token = rng.choice(list(tokens))
        x0, y0 = rng.uniform(-50, 100), rng.uniform(-50, 100)
        w, h = rng.uniform(1, 150), rng.uniform(1, 150)
        headers = {"X-Session-Token": token} if token else {}
        response = client.post(
            "/query",
            json={
                "region": [x0, y0, x0 + w, y0 + h],
                "layer_kinds": ["pipes", "buildings"],
                "predicate": rng.choice(["within", "intersects"]),
            },
            headers=headers,
        )
        if response.status_code != 200:
            continue
        body = response.json()
        if tokens[token] == "public":
            found = {
                f["id"]
                for layer in body["layers"].values()
                for f in layer["features"]
            }
            if found & sensitive_ids:
                leaks += 1
    assert leaks == 0
