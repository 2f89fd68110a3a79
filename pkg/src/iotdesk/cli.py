"""Command-line entry point.

Subcommands: `serve` (run the HTTP service), `seed` (provision fixture
entities and tokens), `loadtest` (drive a scenario against the embedded
runtime or a served one), `cost` (price a run under reservation and
pay-per-use models), and `report` (render metrics files as a text table).

Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 strict-mode
SLO failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import requests as requests_lib

from .api import ENDPOINTS, Platform
from .auth import TokenSigner
from .clock import SimulatedClock, SystemClock
from .config import AppConfig, load_config
from .costs import (break_even_requests, load_pricing, payperuse_report,
                    reservation_report)
from .errors import ApiError, Invalid
from .fixtures import (EmbeddedClient, HttpClient, read_fixtures, seed_fixtures,
                       write_fixtures)
from .harness import EmbeddedTarget, HttpTarget, run_load
from .httpd import ApiServer
from .metrics import MetricsReport
from .pipeline import DrainPump, StreamRegistry
from .runtime import MODE_ALIASES, Runtime, normalize_mode
from .scenarios import SCENARIO_NAMES, ScenarioSpec
from .store import EntityStore

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2
EXIT_SLO = 3

DEFAULT_OUT_DIR = "out"


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _store_path(args, config: AppConfig) -> str:
    if getattr(args, "store", None):
        return args.store
    if config.store.path:
        return config.store.path
    return os.path.join(getattr(args, "out_dir", DEFAULT_OUT_DIR), "store.log")


def _fixtures_path(args) -> str:
    if getattr(args, "fixtures", None):
        return args.fixtures
    return os.path.join(getattr(args, "out_dir", DEFAULT_OUT_DIR), "fixtures.json")


def _build_platform(config: AppConfig, clock, store: EntityStore) -> Platform:
    signer = TokenSigner(config.auth.secret, ttl_seconds=config.auth.ttl_seconds)
    registry = StreamRegistry(batch_size=config.pipeline.batch_size,
                              query_limit=config.pipeline.query_limit,
                              dump_dir=config.pipeline.dump_dir)
    platform = Platform(store, signer, registry, clock,
                        sync_read=config.pipeline.sync_read,
                        query_limit=config.pipeline.query_limit)
    platform.bootstrap_admin(config.auth.bootstrap_name,
                             config.auth.bootstrap_username,
                             config.auth.bootstrap_password)
    platform.provision_existing_streams()
    return platform


# -- serve ---------------------------------------------------------------


def cmd_serve(args) -> int:
    config = load_config(args.config)
    if args.mode:
        config.runtime = dataclasses.replace(config.runtime, mode=args.mode)
    host = args.host or config.server.host
    port = args.port if args.port is not None else config.server.port
    store = EntityStore.load(_store_path(args, config))
    platform = _build_platform(config, SystemClock(), store)
    runtime = Runtime(platform, config.runtime)
    pump = None
    if config.pipeline.background_drain:
        pump = DrainPump(platform.registry,
                         interval_ms=config.pipeline.drain_interval_ms)
        pump.start()
    try:
        server = ApiServer(runtime, host, port)
    except OSError as exc:
        print(f"cannot bind {host}:{port}: {exc}", file=sys.stderr)
        if pump is not None:
            pump.stop()
        return EXIT_FAILURE
    print(f"listening on {server.base_url} mode={runtime.mode}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        if pump is not None:
            pump.stop()
        store.close()
    return EXIT_OK


# -- seed ----------------------------------------------------------------


def cmd_seed(args) -> int:
    config = load_config(args.config)
    count = args.count if args.count is not None else config.harness.fixture_count
    fixtures_path = _fixtures_path(args)
    previous = read_fixtures(fixtures_path) if os.path.exists(fixtures_path) else None
    store = None
    if args.target:
        client = HttpClient(args.target)
    else:
        store = EntityStore.load(_store_path(args, config))
        platform = _build_platform(config, SimulatedClock(), store)
        client = EmbeddedClient(platform)
    try:
        manifest = seed_fixtures(client, count,
                                 admin_username=config.auth.bootstrap_username,
                                 admin_password=config.auth.bootstrap_password,
                                 previous=previous)
    except requests_lib.exceptions.RequestException as exc:
        print(f"seed target unreachable: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    finally:
        if store is not None:
            store.close()
    os.makedirs(os.path.dirname(os.path.abspath(fixtures_path)), exist_ok=True)
    write_fixtures(manifest, fixtures_path)
    print(f"seeded {len(manifest['users'])} fixture users -> {fixtures_path}")
    return EXIT_OK


# -- loadtest ------------------------------------------------------------


def cmd_loadtest(args) -> int:
    config = load_config(args.config)
    mode = normalize_mode(args.mode) if args.mode else config.runtime.mode
    config.runtime = dataclasses.replace(config.runtime, mode=mode)
    spec = ScenarioSpec.named(args.scenario, time_scale=args.time_scale,
                              vu_scale=args.vu_scale)
    fixtures_path = _fixtures_path(args)
    if not os.path.exists(fixtures_path):
        print(f"fixtures file {fixtures_path!r} not found; "
              "run `iotdesk seed` first", file=sys.stderr)
        return EXIT_FAILURE
    fixtures = read_fixtures(fixtures_path)
    manifest = {
        "command": "loadtest",
        "scenario": args.scenario,
        "endpoint": args.endpoint,
        "mode": mode,
        "seed": args.seed,
        "time_scale": args.time_scale,
        "vu_scale": args.vu_scale,
        "fixture_count": len(fixtures.get("users", [])),
        "target": args.target or "embedded",
        "config": config.echo(),
    }
    if args.target:
        target = HttpTarget(args.target)
    else:
        store = EntityStore.load(_store_path(args, config))
        store.close()  # measurement runs must not grow the durable log
        platform = _build_platform(config, SimulatedClock(), store)
        runtime = Runtime(platform, config.runtime)
        pump = None
        if config.pipeline.background_drain:
            pump = DrainPump(platform.registry,
                             interval_ms=config.pipeline.drain_interval_ms)
        target = EmbeddedTarget(runtime, pump)
    try:
        report = run_load(spec, args.endpoint, target, fixtures, seed=args.seed,
                          mode=mode, tick_ms=config.harness.tick_ms,
                          manifest=manifest)
    except Invalid as exc:
        print(f"loadtest failed: {exc.detail}", file=sys.stderr)
        return EXIT_FAILURE
    os.makedirs(args.out_dir, exist_ok=True)
    base = f"{args.scenario}-{args.endpoint}-{mode}"
    if args.tag:
        base += f"-{args.tag}"
    csv_path = os.path.join(args.out_dir, base + ".csv")
    json_path = os.path.join(args.out_dir, base + ".json")
    report.write(csv_path, json_path)
    print(f"requests={report.total_requests} successes={report.successes} "
          f"success_rate={report.success_rate():.4f} "
          f"avg_ms={report.average_ms:.3f} p95_ms={report.p95_ms:.3f} "
          f"cold_starts={report.cold_starts}")
    print(f"wrote {csv_path} and {json_path}")
    if report.incomplete:
        print("run aborted early: target unreachable", file=sys.stderr)
        return EXIT_FAILURE
    if args.strict and report.success_rate() < 1.0:
        print("strict mode: non-200 responses present", file=sys.stderr)
        return EXIT_SLO
    return EXIT_OK


# -- cost ----------------------------------------------------------------


def _cost_inputs(args) -> tuple[int, float | None, float | None, float]:
    """Resolve (requests, average_ms, billed_ms_total, duration_h)."""
    if args.metrics:
        with open(args.metrics, "r", encoding="utf-8") as fh:
            summary = json.load(fh)
        requests = summary["total_requests"]
        average_ms = summary.get("average_ms")
        billed = summary.get("billed_ms_total") or None
        duration_h = args.duration_h
        if duration_h is None:
            duration_h = summary.get("duration_s", 1800.0) / 3600.0
        return requests, average_ms, billed, duration_h
    if args.requests is None:
        raise Invalid("need --metrics or --requests")
    duration_h = args.duration_h if args.duration_h is not None else 0.5
    return args.requests, args.average_ms, None, duration_h


def cmd_cost(args) -> int:
    book = load_pricing(args.pricing)
    requests, average_ms, billed_total, duration_h = _cost_inputs(args)
    cluster_names = args.cluster or sorted(book.clusters)
    usage_names = args.usage or sorted(book.usage)
    reports = []
    for name in cluster_names:
        reports.append(reservation_report(name, book.cluster(name), duration_h,
                                          requests))
    for name in usage_names:
        reports.append(payperuse_report(
            name, book.usage_profile(name), requests,
            average_ms=average_ms if average_ms is not None else 100.0,
            billed_ms_total=billed_total))
    break_evens = []
    for cluster_name in cluster_names:
        total = reservation_report(cluster_name, book.cluster(cluster_name),
                                   duration_h, requests).total_usd
        for usage_name in usage_names:
            needed = break_even_requests(total, book.usage_profile(usage_name))
            break_evens.append({
                "cluster": cluster_name,
                "usage": usage_name,
                "break_even_requests": needed,
                "served_requests": requests,
                "ratio": needed / requests if requests else None,
            })
    payload = {
        "inputs": {"requests": requests, "average_ms": average_ms,
                   "billed_ms_total": billed_total, "duration_h": duration_h},
        "reports": [r.to_json() for r in reports],
        "break_even": break_evens,
    }
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        width = max(len("profile"), max(len(r.label) for r in reports))
        print(f"{'profile':<{width}}  {'kind':<11}  {'total_usd':>10}  "
              f"{'cents/1000':>10}")
        for r in reports:
            print(f"{r.label:<{width}}  {r.kind:<11}  {r.total_usd:>10.4f}  "
                  f"{r.cents_per_1000:>10.4f}")
        for be in break_evens:
            print(f"break-even {be['cluster']} vs {be['usage']}: "
                  f"{be['break_even_requests']} requests "
                  f"({be['ratio']:.2f}x served)")
    return EXIT_OK


# -- report --------------------------------------------------------------


def cmd_report(args) -> int:
    rows = []
    for path in args.metrics:
        with open(path, "r", encoding="utf-8") as fh:
            summary = json.load(fh)
        if not isinstance(summary, dict) or "total_requests" not in summary:
            print(f"error: {path} is not a loadtest metrics file",
                  file=sys.stderr)
            return EXIT_FAILURE
        rows.append((
            summary.get("endpoint", "?"), summary.get("scenario", "?"),
            summary.get("mode", "?"), summary["total_requests"],
            summary["successes"], summary["average_ms"], summary["p95_ms"],
        ))
    header = (f"{'endpoint':<24} {'scenario':<9} {'mode':<15} "
              f"{'requests':>9} {'successes':>9} {'avg_ms':>9} {'p95_ms':>9}")
    lines = [header, "-" * len(header)]
    for endpoint, scenario, mode, total, ok, avg, p95 in rows:
        lines.append(f"{endpoint:<24} {scenario:<9} {mode:<15} "
                     f"{total:>9} {ok:>9} {avg:>9.2f} {p95:>9.2f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(text, end="")
    return EXIT_OK


# -- parser --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="iotdesk",
                     description="Desk-scale IoT platform and migration lab")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def add_common(p):
        p.add_argument("--config", help="config file (TOML); falls back to "
                                        "$IOT_CONFIG, then defaults")
        p.add_argument("--store", help="entity store log path")
        p.add_argument("--out-dir", default=DEFAULT_OUT_DIR,
                       help="directory for generated files")

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    add_common(p_serve)
    p_serve.add_argument("--mode", choices=sorted(MODE_ALIASES))
    p_serve.add_argument("--host")
    p_serve.add_argument("--port", type=int)
    p_serve.set_defaults(func=cmd_serve)

    p_seed = sub.add_parser("seed", help="provision fixture users and tokens")
    add_common(p_seed)
    p_seed.add_argument("--count", type=int)
    p_seed.add_argument("--fixtures", help="fixtures manifest path")
    p_seed.add_argument("--target", help="seed a served runtime at this URL "
                                         "instead of the embedded one")
    p_seed.set_defaults(func=cmd_seed)

    p_load = sub.add_parser("loadtest", help="run a load scenario")
    add_common(p_load)
    p_load.add_argument("--scenario", required=True, choices=SCENARIO_NAMES)
    p_load.add_argument("--endpoint", default="sensors-get",
                        choices=sorted(ENDPOINTS))
    p_load.add_argument("--mode", choices=sorted(MODE_ALIASES))
    p_load.add_argument("--time-scale", type=float, default=1.0)
    p_load.add_argument("--vu-scale", type=float, default=1.0)
    p_load.add_argument("--seed", type=int, default=42)
    p_load.add_argument("--fixtures", help="fixtures manifest path")
    p_load.add_argument("--target", help="load a served runtime at this URL "
                                         "instead of the embedded one")
    p_load.add_argument("--tag", help="suffix for output file names")
    p_load.add_argument("--strict", action="store_true",
                        help="exit 3 unless every response is 200")
    p_load.set_defaults(func=cmd_loadtest)

    p_cost = sub.add_parser("cost", help="price a run")
    p_cost.add_argument("--pricing", help="pricing book (TOML); defaults to "
                                          "the packaged profiles")
    p_cost.add_argument("--metrics", help="metrics JSON from loadtest")
    p_cost.add_argument("--requests", type=int)
    p_cost.add_argument("--average-ms", type=float)
    p_cost.add_argument("--duration-h", type=float)
    p_cost.add_argument("--cluster", action="append",
                        help="cluster profile name (repeatable)")
    p_cost.add_argument("--usage", action="append",
                        help="usage profile name (repeatable)")
    p_cost.add_argument("--out", help="write the JSON cost report here")
    p_cost.add_argument("--json", action="store_true",
                        help="print JSON instead of the text table")
    p_cost.set_defaults(func=cmd_cost)

    p_report = sub.add_parser("report", help="summarize metrics files")
    p_report.add_argument("metrics", nargs="+", help="metrics JSON files")
    p_report.add_argument("--out", help="also write the table here")
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except ApiError as exc:
        print(f"error: {exc.detail}", file=sys.stderr)
        return EXIT_FAILURE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
