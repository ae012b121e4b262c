"""End-to-end pipeline: load, detect, repair, export artifacts.

Artifacts are deterministic for a given config and seed: cleaned GeoJSON
per layer, the flag ledger, and a machine-readable summary. The pipeline
never auto-accepts anything; applied repairs stay open-flagged until a
human resolves them.
"""
from __future__ import annotations

import json
import os

from .errors import NotFoundError, ValidationError
from . import geometry, ingest, ontology as ontology_mod, repair
from .model import InfrastructureNetwork, Layer

SUMMARY_SCHEMA = "undergrid.summary@1"


def layer_from_config(item: dict) -> Layer:
    return Layer(
        id=item["id"],
        name=item.get("name", item["id"]),
        kind=item.get("kind", "other"),
        sensitivity=item.get("sensitivity", "public"),
        temporal_resolution=item.get("temporal_resolution", "none"),
        valid_interval=tuple(item["valid_interval"]) if item.get("valid_interval") else None,
    )


def load_dataset(config: dict, ledger: repair.FlagLedger | None = None) -> InfrastructureNetwork:
    """Build one network from all configured layers, in config order."""
    epsilon = float(config.get("epsilon", 0.01))
    geojson_layers = []
    table_layers = []
    for item in config.get("layers", []):
        layer = layer_from_config(item)
        fmt = item.get("format", "geojson")
        if fmt == "geojson":
            path = item["path"]
            if not os.path.exists(path):
                raise NotFoundError(f"input not found: {path}")
            with open(path, "r", encoding="utf-8") as fh:
                document = fh.read()
            records = ingest.parse_layer(document, layer)
            geojson_layers.append((layer, records))
        elif fmt == "tables":
            for key in ("nodes_path", "edges_path"):
                if not os.path.exists(item[key]):
                    raise NotFoundError(f"input not found: {item[key]}")
            table_layers.append((layer, item))
        else:
            raise ValidationError(f"unknown layer format {fmt!r}")

    network = ingest.build_network(geojson_layers, epsilon=epsilon, ledger=ledger)
    for layer, item in table_layers:
        with open(item["nodes_path"], "r", encoding="utf-8") as fh:
            nodes_csv = fh.read()
        with open(item["edges_path"], "r", encoding="utf-8") as fh:
            edges_csv = fh.read()
        fragment = ingest.load_tables(nodes_csv, edges_csv, layer, epsilon=epsilon)
        network.add_layer(layer)
        for node in fragment.nodes.values():
            network.insert_node(node)
        for edge in fragment.edges.values():
            network.insert_edge(edge)
    ingest.split_edges_at_nodes(network)
    network.check_integrity()
    return network


def load_ontologies(config: dict):
    st_graph = None
    domains = []
    onto_cfg = config.get("ontologies") or {}
    if onto_cfg.get("spatiotemporal"):
        with open(onto_cfg["spatiotemporal"], "r", encoding="utf-8") as fh:
            st_graph = ontology_mod.load_ontology(fh.read())
    for path in onto_cfg.get("domains", []):
        with open(path, "r", encoding="utf-8") as fh:
            domains.append(ontology_mod.load_ontology(fh.read()))
    return st_graph, tuple(domains)


def building_footprints(network: InfrastructureNetwork, buildings_layer: str | None):
    """Direct polygon footprints plus whatever polygonizes out of the edge graph."""
    polygons = []
    open_nodes = []
    if buildings_layer and buildings_layer in network.layers:
        for fp in sorted(network.layer_footprints(buildings_layer), key=lambda f: f.id):
            polygons.extend(fp.geometry.polygons)
        assembled, open_nodes = geometry.polygonize_layer(network, buildings_layer)
        polygons.extend(assembled.polygons)
    return geometry.MultiPolygonGeometry(polygons=polygons), open_nodes


def run_pipeline(config: dict, mode: str = "repair", output_dir: str | None = None) -> dict:
    """Run convert/detect/repair and write artifacts; returns the summary.

    convert: load + assemble + export only.
    detect:  convert + all detection rules (nothing applied).
    repair:  detect + apply merge/symbol/boundary suggestions (flags stay
             open) and compute reconnection suggestions for review.
    """
    if mode not in ("convert", "detect", "repair"):
        raise ValidationError(f"unknown pipeline mode {mode!r}")
    if not config.get("layers"):
        raise ValidationError("config declares no layers")
    out_dir = output_dir or config.get("output_dir") or "out"
    os.makedirs(out_dir, exist_ok=True)

    ledger = repair.FlagLedger()
    network = load_dataset(config, ledger)

    rules_cfg = config.get("rules") or {}
    pipes_layer = rules_cfg.get("pipes_layer")
    streets_layer = rules_cfg.get("streets_layer")
    buildings_layer = rules_cfg.get("buildings_layer")
    counts: dict[str, int] = {}

    if mode in ("detect", "repair"):
        # rule 1: duplicate nodes, layer by layer
        for layer_id in sorted(network.layers):
            flags = repair.detect_duplicate_nodes(network, layer_id, ledger)
            counts["duplicate_nodes"] = counts.get("duplicate_nodes", 0) + len(flags)
        if mode == "repair":
            for suggestion in _open_suggestions(ledger, "merge_nodes"):
                repair.apply_suggestion(network, ledger, suggestion)

        # rule 2: drawing symbols on the pipes layer
        if pipes_layer:
            symbol_cfg = rules_cfg.get("symbol") or {}
            flags = repair.detect_symbol_circles(
                network,
                pipes_layer,
                ledger,
                max_radius=float(symbol_cfg.get("max_radius", repair.SYMBOL_MAX_RADIUS)),
                min_nodes=int(symbol_cfg.get("min_nodes", repair.SYMBOL_MIN_NODES)),
                radial_tolerance=float(symbol_cfg.get("radial_tolerance", repair.SYMBOL_RADIAL_TOLERANCE)),
            )
            counts["symbol_circle"] = len(flags)
            if mode == "repair":
                for suggestion in _open_suggestions(ledger, "replace_symbol"):
                    repair.apply_suggestion(network, ledger, suggestion)

        # rule 3: building boundaries
        if buildings_layer and buildings_layer in network.layers:
            _, open_nodes = geometry.polygonize_layer(network, buildings_layer)
            suggestions = repair.repair_building_boundaries(
                network, buildings_layer, ledger, open_node_ids=open_nodes
            )
            counts["open_boundary"] = len(suggestions)
            if mode == "repair":
                for suggestion in suggestions:
                    if not suggestion.applied:
                        repair.apply_suggestion(network, ledger, suggestion)

        # rules 4-6 need the repaired building footprints
        if pipes_layer:
            footprints, _ = building_footprints(network, buildings_layer)
            flags = repair.detect_dangling_ends(network, pipes_layer, footprints, ledger)
            counts["dangling_end"] = len(flags)
            flags = repair.check_valve_degree(network, pipes_layer, ledger)
            counts["valve_degree"] = len(flags)

            infer_cfg = rules_cfg.get("inference") or {}
            suggestions = repair.infer_missing_edges(
                network,
                pipes_layer,
                streets_layer_id=streets_layer,
                search_radius=float(infer_cfg.get("search_radius", repair.INFER_SEARCH_RADIUS)),
                corridor_half_width=float(
                    infer_cfg.get("corridor_half_width", repair.INFER_CORRIDOR_HALF_WIDTH)
                ),
                ledger=ledger,
            )
            counts["inferred_edge"] = len(suggestions)

    # artifacts
    artifacts = {}
    for layer_id in sorted(network.layers):
        doc = ingest.export_layer(network, layer_id, ledger=ledger)
        path = os.path.join(out_dir, f"{layer_id}.geojson")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
        artifacts[layer_id] = path
    ledger_path = os.path.join(out_dir, "ledger.json")
    with open(ledger_path, "w", encoding="utf-8") as fh:
        json.dump(ledger.to_dict(), fh, indent=2, sort_keys=True)
    artifacts["ledger"] = ledger_path

    summary = {
        "schema": SUMMARY_SCHEMA,
        "mode": mode,
        "revision": network.revision,
        "layers": {
            lid: {
                "nodes": len(network.layer_nodes(lid)),
                "edges": len(network.layer_edges(lid)),
                "footprints": len(network.layer_footprints(lid)),
            }
            for lid in sorted(network.layers)
        },
        "flag_counts": dict(sorted(counts.items())),
        "open_flags": len(ledger.open_flags()),
        "artifacts": {k: os.path.basename(v) for k, v in sorted(artifacts.items())},
    }
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def _open_suggestions(ledger: repair.FlagLedger, action: str):
    out = []
    for suggestion in sorted(ledger.suggestions.values(), key=lambda s: s.id):
        if suggestion.action != action or suggestion.applied:
            continue
        flags = ledger.flags_for_suggestion(suggestion.id)
        if flags and all(f.status == "open" for f in flags):
            out.append(suggestion)
    return out


def load_served_dataset(dataset_dir: str, config: dict):
    """Rehydrate network + ledger from a pipeline output directory."""
    ledger_path = os.path.join(dataset_dir, "ledger.json")
    ledger = repair.FlagLedger()
    if os.path.exists(ledger_path):
        with open(ledger_path, "r", encoding="utf-8") as fh:
            ledger = repair.FlagLedger.from_dict(json.load(fh))

    layers = []
    for item in config.get("layers", []):
        layer = layer_from_config(item)
        path = os.path.join(dataset_dir, f"{layer.id}.geojson")
        if not os.path.exists(path):
            raise NotFoundError(f"cleaned layer not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            records = ingest.parse_layer(fh.read(), layer)
        layers.append((layer, records))
    network = ingest.build_network(layers, epsilon=float(config.get("epsilon", 0.01)))
    return network, ledger
