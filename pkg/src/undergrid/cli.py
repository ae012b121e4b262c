"""Command-line driver: convert, detect, repair, eval, serve, query, resolve.

Exit codes: 0 success, 1 usage error, 2 input error, 3 internal error.
The summary printed by pipeline commands is machine-readable JSON.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import (
    AuthorizationError,
    ConflictError,
    IntegrityError,
    NotFoundError,
    ParseError,
    UndergridError,
    ValidationError,
)
from . import fixtures, ontology as ontology_mod, pipeline, repair, service, synth

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3

LISTEN_ENV = "UNDERGRID_LISTEN"


def _load_config(path: str) -> dict:
    if not os.path.exists(path):
        raise NotFoundError(f"config not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _cmd_pipeline(args, mode: str) -> int:
    config = _load_config(args.config)
    if args.epsilon is not None:
        config["epsilon"] = args.epsilon
    if args.seed is not None:
        config["seed"] = args.seed
    summary = pipeline.run_pipeline(config, mode=mode, output_dir=args.out)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_eval(args) -> int:
    reports = []
    for constraint in (False, True):
        report = synth.run_experiment(
            seed=args.seed,
            rows=args.rows,
            cols=args.cols,
            block=args.block,
            removal_fraction=args.removal_fraction,
            search_radius=args.search_radius,
            corridor_half_width=args.corridor_half_width,
            with_streets=constraint,
        )
        reports.append(report)

    out_dir = args.out or "out"
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, f"eval_seed{args.seed}.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2, sort_keys=True)
    csv_path = os.path.join(out_dir, f"eval_seed{args.seed}.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(synth.EvaluationReport.CSV_HEADER + "\n")
        for report in reports:
            fh.write(report.to_csv_row() + "\n")

    print(f"{'constraint':>12} {'TP':>5} {'FP':>5} {'removed':>8} {'precision':>10} {'recall':>8}")
    for report in reports:
        print(
            f"{report.params['constraint']:>12} {report.true_positives:>5} "
            f"{report.false_positives:>5} {report.removed:>8} "
            f"{report.precision:>10.3f} {report.recall:>8.3f}"
        )
    return EXIT_OK


def _build_store(config: dict, dataset_dir: str) -> service.Store:
    network, ledger = pipeline.load_served_dataset(dataset_dir, config)
    st_graph, domains = pipeline.load_ontologies(config)
    svc = config.get("service") or {}
    return service.Store(
        network,
        ledger=ledger,
        st_ontology=st_graph,
        domain_ontologies=domains,
        tokens=svc.get("tokens"),
        area_cap_km2=float(svc.get("area_cap_km2", service.DEFAULT_AREA_CAP_KM2)),
    )


def _cmd_serve(args) -> int:
    import uvicorn

    config = _load_config(args.config)
    dataset_dir = args.dataset or config.get("output_dir")
    if not dataset_dir:
        print("no dataset directory (use --dataset or output_dir in config)", file=sys.stderr)
        return EXIT_USAGE
    store = _build_store(config, dataset_dir)
    app = service.create_app(store)
    listen = (
        os.environ.get(LISTEN_ENV)
        or args.listen
        or (config.get("service") or {}).get("listen")
        or "127.0.0.1:8787"
    )
    host, _, port = listen.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8787), log_level="warning")
    return EXIT_OK


def _cmd_query(args) -> int:
    config = _load_config(args.config)
    dataset_dir = args.dataset or config.get("output_dir")
    store = _build_store(config, dataset_dir)
    session = service.Session(token="", role=args.role)

    region = json.loads(args.region)
    query = ontology_mod.RegionTimeQuery(
        region=region,
        layer_kinds=tuple(args.kinds.split(",")),
        interval=tuple(args.interval.split(",")) if args.interval else None,
        predicate=args.predicate,
    )

    def gate(layer):
        verdict = service.authorize_with(store.policy, session, "read_public", layer)
        return True if verdict is True else verdict.reason

    result = ontology_mod.integrated_query(
        query,
        store.network,
        st_ontology=store.st_ontology,
        domain_ontologies=store.domain_ontologies,
        mappings=store.mappings(),
        authorize=gate,
        ledger=store.ledger,
    )
    print(
        json.dumps(
            {
                "revision": result.revision,
                "layers": {k: [f["id"] for f in v] for k, v in result.layers.items()},
                "denied_layers": result.denied_layers,
            },
            indent=2,
            sort_keys=True,
        )
    )
    return EXIT_OK


def _cmd_resolve(args) -> int:
    config = _load_config(args.config)
    dataset_dir = args.dataset or config.get("output_dir")
    network, ledger = pipeline.load_served_dataset(dataset_dir, config)
    flag = repair.resolve_flag(network, ledger, args.flag, args.decision, actor=args.actor)
    # persist the updated ledger and layers back to the dataset directory
    from . import ingest

    for layer_id in sorted(network.layers):
        doc = ingest.export_layer(network, layer_id, ledger=ledger)
        with open(os.path.join(dataset_dir, f"{layer_id}.geojson"), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
    with open(os.path.join(dataset_dir, "ledger.json"), "w", encoding="utf-8") as fh:
        json.dump(ledger.to_dict(), fh, indent=2, sort_keys=True)
    print(json.dumps({"flag": flag.id, "status": flag.status}))
    return EXIT_OK


def _cmd_fixture(args) -> int:
    config_path = fixtures.write_fixture(args.dir, output_dir=args.out)
    print(json.dumps({"config": config_path}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="undergrid", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    for name, doc in (
        ("convert", "parse inputs and emit assembled layers"),
        ("detect", "convert plus rule-based error detection"),
        ("repair", "detect plus application of suggested fixes (flags stay open)"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None, help="output directory (defaults to config output_dir)")
        p.add_argument("--epsilon", type=float, default=None)
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("eval", help="synthetic corruption/inference experiment")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--rows", type=int, default=10)
    p.add_argument("--cols", type=int, default=10)
    p.add_argument("--block", type=float, default=100.0)
    p.add_argument("--removal-fraction", type=float, default=0.2, dest="removal_fraction")
    p.add_argument("--search-radius", type=float, default=50.0, dest="search_radius")
    p.add_argument("--corridor-half-width", type=float, default=8.0, dest="corridor_half_width")
    p.add_argument("--out", default=None)

    p = sub.add_parser("serve", help="HTTP API over a repaired dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", default=None, help="pipeline output directory")
    p.add_argument("--listen", default=None, help="host:port (env UNDERGRID_LISTEN overrides)")

    p = sub.add_parser("query", help="local integrated query")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--region", required=True, help="JSON bbox [minx,miny,maxx,maxy] or GeoJSON geometry")
    p.add_argument("--kinds", required=True, help="comma-separated layer kinds")
    p.add_argument("--interval", default=None, help="start,end (e.g. 2015-01,2015-12)")
    p.add_argument("--predicate", default="within", choices=("within", "crosses", "intersects"))
    p.add_argument("--role", default="public", choices=service.ROLES)

    p = sub.add_parser("resolve", help="accept or reject a flag")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--flag", required=True)
    p.add_argument("--decision", required=True, choices=("accepted", "rejected"))
    p.add_argument("--actor", default="crew", choices=("crew", "admin"))

    p = sub.add_parser("fixture", help="write the demo dataset inputs")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", default=None)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        if args.command in ("convert", "detect", "repair"):
            return _cmd_pipeline(args, args.command)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "serve":
            return _cmd_serve(args)
        if args.command == "query":
            return _cmd_query(args)
        if args.command == "resolve":
            return _cmd_resolve(args)
        if args.command == "fixture":
            return _cmd_fixture(args)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (NotFoundError, ParseError, ValidationError, IntegrityError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConflictError, AuthorizationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except UndergridError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort exit code mapping
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
