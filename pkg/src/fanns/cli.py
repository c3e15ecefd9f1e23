"""Command-line front end.

Every subcommand is a thin client of the index service: with ``--server``
it talks to a running instance over HTTP, otherwise it spins up the
service in-process and routes requests through the same API. File paths
are resolved client-side; relative paths land under the directory named
by the FANNS_DATA_ROOT environment variable when it is set.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .service.state import DATA_ROOT_ENV, resolve_path


def make_client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=3600.0)
    import warnings

    from starlette.testclient import TestClient

    from .service.app import create_app

    warnings.filterwarnings("ignore", module="starlette.*")
    return TestClient(create_app())


def _fail(message: str) -> "NoReturn":  # noqa: F821
    print(f"error: {message}", file=sys.stderr)
    raise SystemExit(1)


def _check(resp):
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        _fail(f"{resp.request.method} {resp.request.url.path} -> "
              f"{resp.status_code}: {detail}")
    return resp.json()


def _load_json(path: str):
    try:
        return json.loads(Path(resolve_path(path)).read_text(encoding="utf-8"))
    except FileNotFoundError:
        _fail(f"file not found: {path}")
    except json.JSONDecodeError as exc:
        _fail(f"invalid JSON in {path}: {exc}")


def _dataset_name(data_dir: str, explicit: str | None) -> str:
    return explicit or Path(resolve_path(data_dir)).name


def _load_dataset(client, data_dir: str, name: str | None) -> str:
    body = {"path": str(resolve_path(data_dir))}
    if name:
        body["name"] = name
    info = _check(client.post("/datasets/load", json=body))
    return info["name"]


def cmd_gen(client, args) -> None:
    columns = _load_json(args.schema)
    name = _dataset_name(args.out, args.name)
    info = _check(client.post("/datasets/generate", json={
        "name": name, "n": args.n, "d": args.d, "seed": args.seed,
        "columns": columns, "mixture_components": args.components,
        "out_dir": str(resolve_path(args.out)),
    }))
    print(json.dumps(info, indent=2))


def cmd_gen_queries(client, args) -> None:
    name = _load_dataset(client, args.data, args.name)
    band = [float(x) for x in args.band.split(",")] if args.band else [0.0, 1.0]
    if len(band) != 2:
        _fail("--band expects 'low,high'")
    info = _check(client.post(f"/datasets/{name}/queries", json={
        "family": args.family, "p": args.p, "k": args.k, "seed": args.seed,
        "band": band, "perturbation": args.perturbation,
        "out_path": str(resolve_path(args.out)),
    }))
    print(json.dumps(info, indent=2))


def cmd_gt(client, args) -> None:
    name = _load_dataset(client, args.data, args.name)
    info = _check(client.post(f"/datasets/{name}/ground-truth", json={
        "queries_path": str(resolve_path(args.queries)), "k": args.k,
        "out_path": str(resolve_path(args.out)),
    }))
    print(json.dumps(info, indent=2))


def cmd_bench(client, args) -> None:
    name = _load_dataset(client, args.data, args.name)
    params = _load_json(args.params) if args.params else {}
    widths = [int(x) for x in args.widths.split(",")]
    resp = _check(client.post("/bench", json={
        "dataset": name, "method": args.index, "params": params,
        "queries_path": str(resolve_path(args.queries)),
        "gt_path": str(resolve_path(args.gt)),
        "widths": widths, "runs": args.runs,
    }))
    out = Path(resolve_path(args.out))
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(resp["csv"], encoding="utf-8")
    summary = {"method": resp["method"], "filter_family": resp["filter_family"],
               "build_seconds": resp["build_seconds"],
               "index_bytes": resp["index_bytes"], "out": str(out),
               "points": resp["points"]}
    print(json.dumps(summary, indent=2))


def cmd_tune(client, args) -> None:
    name = _load_dataset(client, args.data, args.name)
    config = _load_json(args.config)
    body = {"dataset": name, **config}
    resp = _check(client.post("/tune", json=body))
    if args.out:
        out = Path(resolve_path(args.out))
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(resp["best_params"], indent=2,
                                  sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(resp, indent=2))


def cmd_query(client, args) -> None:
    name = _load_dataset(client, args.data, args.name)
    params = _load_json(args.params) if args.params else {}
    info = _check(client.post("/indexes", json={
        "dataset": name, "method": args.index, "params": params}))
    body = {"k": args.k, "width": args.width}
    if args.vector_id is not None:
        body["vector_id"] = args.vector_id
    elif args.vector:
        body["vector"] = [float(x) for x in args.vector.split(",")]
    else:
        _fail("provide --vector-id or --vector")
    if args.filter:
        body["filter"] = _load_json(args.filter)
    resp = _check(client.post(f"/indexes/{info['index_id']}/query", json=body))
    print(json.dumps(resp, indent=2))


def cmd_methods(client, args) -> None:
    print(json.dumps(_check(client.get("/methods")), indent=2))


def cmd_serve(args) -> None:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fanns",
        description="Filtered approximate nearest neighbor search toolkit; "
                    f"relative paths resolve under ${DATA_ROOT_ENV}.")
    parser.add_argument("--server", default=None,
                        help="base URL of a running service; default runs "
                             "the service in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--schema", required=True,
                   help="JSON list of column specs ({name, kind, ...})")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--name", default=None)
    p.add_argument("--components", type=int, default=8)

    p = sub.add_parser("gen-queries", help="generate a query set")
    p.add_argument("--data", required=True)
    p.add_argument("--family", required=True,
                   choices=["em", "range", "emis", "none"])
    p.add_argument("--p", type=int, default=100)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--band", default=None, help="selectivity band 'low,high'")
    p.add_argument("--perturbation", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.add_argument("--name", default=None)

    p = sub.add_parser("gt", help="compute exact ground truth for queries")
    p.add_argument("--data", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--name", default=None)

    p = sub.add_parser("bench", help="build one index and sweep widths")
    p.add_argument("--data", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--index", required=True, help="method name")
    p.add_argument("--params", default=None, help="JSON parameter file")
    p.add_argument("--widths", required=True, help="comma-separated widths")
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--name", default=None)

    p = sub.add_parser("tune", help="greedy parameter search")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True,
                   help="JSON with method, family, value_lists, "
                        "default_indices, widths, and optional k/p/seed")
    p.add_argument("--out", default=None, help="write best params JSON here")
    p.add_argument("--name", default=None)

    p = sub.add_parser("query", help="build an index and run one query")
    p.add_argument("--data", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--params", default=None)
    p.add_argument("--vector-id", type=int, default=None)
    p.add_argument("--vector", default=None, help="comma-separated floats")
    p.add_argument("--filter", default=None, help="JSON filter file")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--width", type=int, default=100)
    p.add_argument("--name", default=None)

    p = sub.add_parser("methods", help="list available index methods")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def main(argv: list[str] | None = None, client=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        cmd_serve(args)
        return 0
    own_client = client is None
    if own_client:
        client = make_client(args.server)
    try:
        handler = {
            "gen": cmd_gen,
            "gen-queries": cmd_gen_queries,
            "gt": cmd_gt,
            "bench": cmd_bench,
            "tune": cmd_tune,
            "query": cmd_query,
            "methods": cmd_methods,
        }[args.command]
        handler(client, args)
    finally:
        if own_client:
            client.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
