"""HTTP facade: query, update and flag resolution under role-based access.

Roles come from a static token table; unknown or missing tokens act as
the public role. Reads run against snapshots (a slow reader never blocks
the writer); updates and flag resolutions serialize through one lock.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .errors import (
    AuthorizationError,
    ConflictError,
    IntegrityError,
    NotFoundError,
    UndergridError,
    ValidationError,
)
from . import ontology as ontology_mod
from . import repair
from .model import (
    Edge,
    InfrastructureNetwork,
    Node,
    Point2D,
    apply_edit,
)

ROLES = ("admin", "planner", "crew", "public")
CAPABILITIES = ("read_public", "read_sensitive", "update", "resolve_flags")

#: default grant table; a grant is (capability, layer kind or "*")
DEFAULT_GRANTS = {
    "admin": {(c, "*") for c in CAPABILITIES},
    "planner": {("read_public", "*"), ("read_sensitive", "*")},
    "crew": {("read_public", "*"), ("read_sensitive", "*"), ("update", "*"), ("resolve_flags", "*")},
    "public": {("read_public", "*")},
}

DEFAULT_AREA_CAP_KM2 = 25.0


@dataclass
class AccessPolicy:
    grants: dict = field(default_factory=lambda: {r: set(g) for r, g in DEFAULT_GRANTS.items()})

    def __post_init__(self):
        for role in self.grants:
            if role not in ROLES:
                raise ValidationError(f"unknown role {role!r}")
        public = self.grants.get("public", set())
        if any(cap in ("read_sensitive", "update", "resolve_flags") for cap, _ in public):
            raise ValidationError("public role may never read sensitive data or mutate")

    def allows(self, role: str, capability: str, layer_kind: str) -> bool:
        for cap, kind in self.grants.get(role, ()):
            if cap == capability and kind in ("*", layer_kind):
                return True
        return False


@dataclass
class Session:
    token: str
    role: str


@dataclass
class Deny:
    reason: str

    def __bool__(self):
        return False


def authorize(session: Session, capability: str, layer) -> object:
    """True to allow; Deny(reason) otherwise. Pure in (role, capability, layer)."""
    return authorize_with(AccessPolicy(), session, capability, layer)


def authorize_with(policy: AccessPolicy, session: Session, capability: str, layer) -> object:
    if capability not in CAPABILITIES:
        return Deny(reason="unknown_capability")
    required = capability
    if capability == "read_public" and getattr(layer, "sensitivity", "public") == "sensitive":
        required = "read_sensitive"
    kind = getattr(layer, "kind", "other")
    if policy.allows(session.role, required, kind):
        return True
    return Deny(reason=f"role_{session.role}_lacks_{required}")


class Store:
    """Shared state behind the API: network, ledger, ontologies, mappings."""

    def __init__(
        self,
        network: InfrastructureNetwork,
        ledger: repair.FlagLedger | None = None,
        st_ontology=None,
        domain_ontologies=(),
        policy: AccessPolicy | None = None,
        tokens: dict | None = None,
        area_cap_km2: float = DEFAULT_AREA_CAP_KM2,
    ):
        self.network = network
        self.ledger = ledger or repair.FlagLedger()
        self.st_ontology = st_ontology
        self.domain_ontologies = tuple(domain_ontologies)
        self.policy = policy or AccessPolicy()
        self.tokens = dict(tokens or {})
        self.area_cap_km2 = area_cap_km2
        self.write_lock = threading.Lock()
        self._mappings = None
        self._mappings_revision = -1

    def session_for(self, token: str | None) -> Session:
        role = self.tokens.get(token or "", "public")
        if role not in ROLES:
            role = "public"
        return Session(token=token or "", role=role)

    def snapshot(self) -> InfrastructureNetwork:
        with self.write_lock:
            return self.network.snapshot()

    def mappings(self):
        """Instance mappings, rebuilt when the network revision moves."""
        if self.st_ontology is None or not self.domain_ontologies:
            return []
        with self.write_lock:
            if self._mappings_revision != self.network.revision:
                merged = []
                for dom in self.domain_ontologies:
                    merged.extend(
                        ontology_mod.match_instances(dom, self.st_ontology, self.network)
                    )
                self._mappings = merged
                self._mappings_revision = self.network.revision
            return self._mappings


def _region_area_km2(region_geom) -> float:
    polys = (
        region_geom.polygons
        if hasattr(region_geom, "polygons")
        else [region_geom]
    )
    return sum(abs(p.area()) for p in polys) / 1e6


def _parse_actions(raw_actions, network) -> list:
    from .model import add_edge, add_node, modify_edge, modify_node, remove_edge, remove_node

    batch = []
    for item in raw_actions:
        kind = item.get("kind")
        if kind == "add_node":
            batch.append(
                add_node(
                    Node(
                        id=item.get("id") or network.allocate_node_id(),
                        position=Point2D(item["x"], item["y"]),
                        layer_id=item["layer_id"],
                        attributes=dict(item.get("attributes", {})),
                    )
                )
            )
        elif kind == "remove_node":
            batch.append(remove_node(item["id"]))
        elif kind == "modify_node":
            position = Point2D(item["x"], item["y"]) if "x" in item else None
            batch.append(modify_node(item["id"], position=position, attributes=item.get("attributes")))
        elif kind == "add_edge":
            batch.append(
                add_edge(
                    Edge(
                        id=item.get("id") or network.allocate_edge_id(),
                        endpoint_a=item["endpoint_a"],
                        endpoint_b=item["endpoint_b"],
                        layer_id=item["layer_id"],
                        attributes=dict(item.get("attributes", {})),
                    )
                )
            )
        elif kind == "remove_edge":
            batch.append(remove_edge(item["id"]))
        elif kind == "modify_edge":
            batch.append(
                modify_edge(
                    item["id"],
                    endpoint_a=item.get("endpoint_a"),
                    endpoint_b=item.get("endpoint_b"),
                    attributes=item.get("attributes"),
                )
            )
        else:
            raise ValidationError(f"unknown action kind {kind!r}")
    return batch


def _touched_entity_ids(batch) -> list:
    out = []
    for action in batch:
        if action.node is not None:
            out.append(action.node.id)
        elif action.edge is not None:
            out.append(action.edge.id)
        elif action.target_id is not None:
            out.append(action.target_id)
    return out


def _impact_response(store: Store, session: Session, impact: dict):
    """Impact analytics as a query mode: blocks touched by a pipe + attribute sum."""
    edge_id = impact.get("edge_id")
    census_layer = impact.get("census_layer")
    attribute_key = impact.get("attribute_key")
    if not edge_id or not census_layer or not attribute_key:
        return JSONResponse(
            status_code=400,
            content={"error": "impact needs edge_id, census_layer and attribute_key"},
        )
    snapshot = store.snapshot()
    edge = snapshot.edges.get(edge_id)
    if edge is None:
        return JSONResponse(status_code=404, content={"error": f"unknown edge {edge_id!r}"})
    for layer_id in (edge.layer_id, census_layer):
        layer = snapshot.layers.get(layer_id)
        if layer is None:
            return JSONResponse(status_code=404, content={"error": f"unknown layer {layer_id!r}"})
        verdict = authorize_with(store.policy, session, "read_public", layer)
        if verdict is not True:
            return JSONResponse(status_code=403, content={"error": verdict.reason})
    try:
        blocks, total = ontology_mod.impact_query(snapshot, census_layer, edge_id, attribute_key)
    except TypeError as exc:
        return JSONResponse(status_code=400, content={"error": str(exc)})
    return {
        "revision": snapshot.revision,
        "edge_id": edge_id,
        "blocks": blocks,
        "attribute_key": attribute_key,
        "total": total,
        "features": {
            "type": "FeatureCollection",
            "features": [ontology_mod._feature_dict(snapshot, b, store.ledger) for b in blocks],
        },
    }


def create_app(store: Store) -> FastAPI:
    app = FastAPI(title="undergrid", docs_url=None, redoc_url=None)

    def session_of(request: Request) -> Session:
        token = request.headers.get("x-session-token")
        if token is None:
            auth = request.headers.get("authorization", "")
            if auth.lower().startswith("bearer "):
                token = auth[7:]
        return store.session_for(token)

    @app.exception_handler(UndergridError)
    async def on_domain_error(request, exc):
        status = 500
        if isinstance(exc, NotFoundError):
            status = 404
        elif isinstance(exc, (ValidationError, IntegrityError)):
            status = 400
        elif isinstance(exc, ConflictError):
            status = 409
        elif isinstance(exc, AuthorizationError):
            status = 403
        return JSONResponse(status_code=status, content={"error": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok", "revision": store.network.revision}

    @app.get("/layers")
    def layers(request: Request):
        session = session_of(request)
        out = []
        for layer in sorted(store.network.layers.values(), key=lambda l: l.id):
            readable = authorize_with(store.policy, session, "read_public", layer)
            out.append(
                {
                    "id": layer.id,
                    "name": layer.name,
                    "kind": layer.kind,
                    "sensitivity": layer.sensitivity,
                    "temporal_resolution": layer.temporal_resolution,
                    "readable": bool(readable),
                }
            )
        return {"revision": store.network.revision, "layers": out, "role": session.role}

    @app.post("/query")
    async def query(request: Request):
        session = session_of(request)
        body = await request.json()

        impact = body.get("impact")
        if impact is not None:
            return _impact_response(store, session, impact)

        region = body.get("region")
        if region is None:
            return JSONResponse(status_code=400, content={"error": "region is required"})
        layer_kinds = tuple(body.get("layer_kinds") or ())
        try:
            q = ontology_mod.RegionTimeQuery(
                region=region,
                layer_kinds=layer_kinds,
                interval=tuple(body["interval"]) if body.get("interval") else None,
                predicate=body.get("predicate", "within"),
            )
        except ValueError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})

        snapshot = store.snapshot()
        try:
            region_geom = ontology_mod.resolve_region(q.region, store.st_ontology, snapshot)
        except (ValidationError, NotFoundError) as exc:
            status = 404 if isinstance(exc, NotFoundError) else 400
            return JSONResponse(status_code=status, content={"error": str(exc)})
        area = _region_area_km2(region_geom)
        if area > store.area_cap_km2:
            return JSONResponse(
                status_code=400,
                content={"error": f"region area {area:.1f} km2 exceeds cap {store.area_cap_km2} km2"},
            )

        def gate(layer):
            verdict = authorize_with(store.policy, session, "read_public", layer)
            return True if verdict is True else verdict.reason

        result = ontology_mod.integrated_query(
            q,
            snapshot,
            st_ontology=store.st_ontology,
            domain_ontologies=store.domain_ontologies,
            mappings=store.mappings(),
            authorize=gate,
            ledger=store.ledger,
        )
        return {
            "revision": result.revision,
            "layers": {
                lid: {"type": "FeatureCollection", "features": feats}
                for lid, feats in result.layers.items()
            },
            "denied_layers": result.denied_layers,
        }

    @app.post("/update")
    async def update(request: Request):
        session = session_of(request)
        body = await request.json()
        raw_actions = body.get("actions")
        if not raw_actions:
            return JSONResponse(status_code=400, content={"error": "actions are required"})

        with store.write_lock:
            network = store.network
            try:
                batch = _parse_actions(raw_actions, network)
            except KeyError as exc:
                return JSONResponse(status_code=400, content={"error": f"missing field {exc}"})

            # authorization per touched layer
            touched_layers = set()
            for action in batch:
                if action.node is not None:
                    touched_layers.add(action.node.layer_id)
                elif action.edge is not None:
                    touched_layers.add(action.edge.layer_id)
                elif action.target_id is not None:
                    if action.target_id in network.nodes:
                        touched_layers.add(network.nodes[action.target_id].layer_id)
                    elif action.target_id in network.edges:
                        touched_layers.add(network.edges[action.target_id].layer_id)
            for layer_id in sorted(touched_layers):
                layer = network.layers.get(layer_id)
                if layer is None:
                    return JSONResponse(status_code=400, content={"error": f"unknown layer {layer_id!r}"})
                verdict = authorize_with(store.policy, session, "update", layer)
                if verdict is not True:
                    return JSONResponse(status_code=403, content={"error": verdict.reason})

            revision = apply_edit(network, batch)
            flag = store.ledger.add_flag(
                target=_touched_entity_ids(batch)[0],
                rule="manual",
                detail="manual edit: " + ", ".join(_touched_entity_ids(batch)),
                created_rev=revision,
            )
            flag.status = "accepted"
            flag.resolved_by = session.role
            store.ledger.record_commit(revision, origin=f"manual:{flag.id}", actor=session.role)
        return {"revision": revision, "flag_id": flag.id}

    @app.get("/flags")
    def flags(request: Request, status: str | None = None, rule: str | None = None, layer: str | None = None):
        session = session_of(request)
        network = store.network
        out = []
        for flag in sorted(store.ledger.flags.values(), key=lambda f: f.id):
            if status and flag.status != status:
                continue
            if rule and flag.rule != rule:
                continue
            flag_layer = None
            if flag.target in network.nodes:
                flag_layer = network.nodes[flag.target].layer_id
            elif flag.target in network.edges:
                flag_layer = network.edges[flag.target].layer_id
            if layer and flag_layer != layer:
                continue
            if flag_layer is not None:
                layer_obj = network.layers[flag_layer]
                if authorize_with(store.policy, session, "read_public", layer_obj) is not True:
                    continue
            elif session.role == "public":
                # target entity no longer resolves (e.g. merged away):
                # without a layer to check, public sessions see nothing
                continue
            item = {
                "id": flag.id,
                "target": flag.target,
                "rule": flag.rule,
                "status": flag.status,
                "detail": flag.detail,
                "layer_id": flag_layer,
                "created_rev": flag.created_rev,
                "suggestion": None,
            }
            if flag.suggestion_id:
                suggestion = store.ledger.suggestions[flag.suggestion_id]
                item["suggestion"] = {
                    "id": suggestion.id,
                    "action": suggestion.action,
                    "payload": suggestion.payload,
                    "applied": suggestion.applied,
                }
            out.append(item)
        return {"revision": network.revision, "flags": out}

    @app.post("/flags/{flag_id}/resolve")
    async def resolve(flag_id: str, request: Request):
        session = session_of(request)
        body = await request.json()
        decision = body.get("decision")
        if decision not in ("accepted", "rejected"):
            return JSONResponse(status_code=400, content={"error": "decision must be accepted or rejected"})
        flag = store.ledger.flag(flag_id)
        flag_layer = None
        if flag.target in store.network.nodes:
            flag_layer = store.network.nodes[flag.target].layer_id
        elif flag.target in store.network.edges:
            flag_layer = store.network.edges[flag.target].layer_id
        if flag_layer is not None:
            layer_obj = store.network.layers[flag_layer]
            verdict = authorize_with(store.policy, session, "resolve_flags", layer_obj)
            if verdict is not True:
                return JSONResponse(status_code=403, content={"error": verdict.reason})
        elif session.role not in repair.RESOLVER_ROLES and session.role != "admin":
            return JSONResponse(status_code=403, content={"error": f"role_{session.role}_lacks_resolve_flags"})

        with store.write_lock:
            resolved = repair.resolve_flag(
                store.network, store.ledger, flag_id, decision, actor=session.role
            )
        return {
            "revision": store.network.revision,
            "flag": {"id": resolved.id, "status": resolved.status, "resolved_by": resolved.resolved_by},
        }

    return app
