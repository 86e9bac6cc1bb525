"""Command line front end: a thin client for the HTTP service.

By default requests are dispatched to the service in-process (no network);
`--server URL` targets a running `tilecast serve` instead.  Exit codes:
0 success, 1 domain infeasible, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

import httpx

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_USAGE = 2


def _client(server: Optional[str]) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service.app import app

    # TestClient is a synchronous httpx.Client driving the app in-process,
    # so the CLI works with no network and no running server.
    return TestClient(app, raise_server_exceptions=False)


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _post(client: httpx.Client, endpoint: str, payload: dict) -> dict:
    resp = client.post(endpoint, json=payload)
    if resp.status_code == 409:
        print(f"infeasible: {resp.json().get('message', '')}", file=sys.stderr)
        raise SystemExit(EXIT_INFEASIBLE)
    if resp.status_code == 422:
        body = resp.json()
        message = body.get("message") or json.dumps(body.get("detail"))
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    if resp.status_code != 200:
        print(f"error: service returned {resp.status_code}: {resp.text}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    return resp.json()


def _write_out(out: Optional[str], text: str) -> None:
    if out:
        Path(out).write_text(text)
    else:
        print(text, end="" if text.endswith("\n") else "\n")


def _seeds(value: str):
    return [int(s) for s in value.split(",") if s]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tilecast", description=__doc__)
    p.add_argument("--server", help="URL of a running service; default is in-process")
    sub = p.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="one-shot allocation on a scenario snapshot")
    solve.add_argument("--scenario", required=True)
    solve.add_argument("--allocator")
    solve.add_argument("--budget-slots", type=int)
    solve.add_argument("--epsilon", type=float)

    sim = sub.add_parser("simulate", help="full run; writes a results CSV")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--trace")
    sim.add_argument("--allocator")
    sim.add_argument("--seeds", type=_seeds, help="comma-separated; first is used")
    sim.add_argument("--epochs", type=int)
    sim.add_argument("--budget-slots", type=int)
    sim.add_argument("--epsilon", type=float)
    sim.add_argument("--out")

    cmp_ = sub.add_parser("compare", help="all allocators across seeds on one scenario")
    cmp_.add_argument("--scenario", required=True)
    cmp_.add_argument("--trace")
    cmp_.add_argument("--allocator", help="comma-separated subset; default all")
    cmp_.add_argument("--seeds", type=_seeds, default=[0])
    cmp_.add_argument("--budget-slots", type=int)
    cmp_.add_argument("--epsilon", type=float)
    cmp_.add_argument("--out")

    gen = sub.add_parser("gen-trace", help="synthetic RoI trace at a similarity target")
    gen.add_argument("--grid", default="16x9", help="COLSxROWS")
    gen.add_argument("--users", type=int, default=8)
    gen.add_argument("--similarity", type=float, required=True)
    gen.add_argument("--duration", type=float, default=10.0)
    gen.add_argument("--roi-tiles", type=int, default=12)
    gen.add_argument("--seeds", type=_seeds, default=[0], help="first is used")
    gen.add_argument("--out")

    bench = sub.add_parser("bench", help="runtime vs. slot budget for both solvers")
    bench.add_argument("--budget-slots", type=_seeds, default=[500, 1000, 2000, 4000],
                       help="comma-separated budgets to sweep")
    bench.add_argument("--no-naive", action="store_true")
    bench.add_argument("--repeats", type=int, default=1)
    bench.add_argument("--out")

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .service.app import app

        uvicorn.run(app, host=args.host, port=args.port)
        return EXIT_OK

    with _client(args.server) as client:
        if args.command == "solve":
            body = _post(
                client,
                "/solve",
                {
                    "scenario": _read(args.scenario),
                    "allocator": args.allocator,
                    "budget_slots": args.budget_slots,
                    "epsilon": args.epsilon,
                },
            )
            if not body["feasible"]:
                print("infeasible: no allocation satisfies the lower bounds", file=sys.stderr)
                return EXIT_INFEASIBLE
            print(f"objective {body['objective']:g} ({body['objective_exact']})")
            print(f"slots {body['total_slots']}")
            for e in body["plan"]:
                target = f" user {e['target_user']}" if e["target_user"] is not None else ""
                print(
                    f"tile {e['tile']:>4} level {e['level']} at {e['rate_mbps']:g} Mb/s"
                    f" ({e['slots']} slots){target}"
                )
            return EXIT_OK

        if args.command == "simulate":
            body = _post(
                client,
                "/simulate",
                {
                    "scenario": _read(args.scenario),
                    "trace": _read(args.trace) if args.trace else None,
                    "allocator": args.allocator,
                    "seed": args.seeds[0] if args.seeds else None,
                    "epochs": args.epochs,
                    "budget_slots": args.budget_slots,
                    "epsilon": args.epsilon,
                },
            )
            _write_out(args.out, body["csv"])
            if body["degraded_epochs"]:
                print(f"infeasible: {body['degraded_epochs']} degraded epoch(s)", file=sys.stderr)
                return EXIT_INFEASIBLE
            return EXIT_OK

        if args.command == "compare":
            body = _post(
                client,
                "/compare",
                {
                    "scenario": _read(args.scenario),
                    "trace": _read(args.trace) if args.trace else None,
                    "seeds": args.seeds,
                    "allocators": args.allocator.split(",") if args.allocator else None,
                    "budget_slots": args.budget_slots,
                    "epsilon": args.epsilon,
                },
            )
            _write_out(args.out, body["csv"])
            print(f"{'allocator':<14} {'utility':>10} {'goodput':>12} {'fairness':>9} {'infeasible':>10}",
                  file=sys.stderr)
            for s in body["summary"]:
                print(
                    f"{s['allocator']:<14} {s['mean_realized_utility']:>10.3f}"
                    f" {s['mean_goodput']:>12.0f} {s['mean_fairness']:>9.3f}"
                    f" {s['infeasible_runs']:>10}",
                    file=sys.stderr,
                )
            return EXIT_OK

        if args.command == "gen-trace":
            try:
                cols, rows = (int(v) for v in args.grid.split("x"))
            except ValueError:
                print(f"error: bad grid {args.grid!r}", file=sys.stderr)
                return EXIT_USAGE
            body = _post(
                client,
                "/gen-trace",
                {
                    "cols": cols,
                    "rows": rows,
                    "n_users": args.users,
                    "similarity": args.similarity,
                    "duration": args.duration,
                    "seed": args.seeds[0] if args.seeds else 0,
                    "roi_tiles": args.roi_tiles,
                },
            )
            _write_out(args.out, body["trace"])
            print(f"measured similarity {body['measured_similarity']:.3f}", file=sys.stderr)
            return EXIT_OK

        if args.command == "bench":
            body = _post(
                client,
                "/bench",
                {
                    "budgets": args.budget_slots,
                    "include_naive": not args.no_naive,
                    "repeats": args.repeats,
                },
            )
            lines = ["T,improved_s,naive_s,objective"]
            for row in body["rows"]:
                naive_s = row.get("naive_s", "")
                lines.append(f"{row['T']},{row['improved_s']},{naive_s},{row['objective']}")
            _write_out(args.out, "\n".join(lines) + "\n")
            return EXIT_OK

    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
