"""Closed-loop virtual-user load generator.

Virtual users (VUs) each keep exactly one request in flight: issue, await,
record, repeat, with no think time. The population follows a scenario's
piecewise-linear schedule, adjusted once per scheduler tick. Two drivers
share the contract: a deterministic single-threaded event loop over the
simulated clock (embedded runtime), and a threaded wall-clock driver for a
runtime reached over HTTP.
"""

from __future__ import annotations

import heapq
import json
import random
import threading
import time
from dataclasses import dataclass, field

import requests as requests_lib

from .api import ENDPOINTS, Request, Response
from .errors import Invalid
from .metrics import DEFAULT_BUCKET_WIDTH_S, MetricsReport, RequestRecord
from .pipeline import DrainPump
from .runtime import Runtime
from .scenarios import ScenarioSpec, vu_at

MIN_CYCLE_MS = 0.01  # keeps a zero-latency response from stalling simulated time


class RequestFactory:
    """Builds valid endpoint requests from seeded fixtures.

    Every generated request targets entities owned by a randomly selected
    fixture user, so a healthy runtime answers 200. Name counters make the
    create-endpoints (users/devices/sensors/consumers) non-conflicting.
    """

    def __init__(self, fixtures: dict, seed: int):
        self.fixtures = fixtures
        self.users = fixtures.get("users", [])
        if not self.users:
            raise Invalid("fixtures contain no users; run the seed step first")
        self.admin = fixtures.get("admin", {})
        self.seed = seed
        self._lock = threading.Lock()
        self._counter = 0

    def _next_serial(self) -> int:
        with self._lock:
            self._counter += 1
            return self._counter

    def _bearer(self, token: str) -> dict:
        return {"authorization": f"Bearer {token}"}

    def build(self, endpoint: str, rng: random.Random) -> Request:
        if endpoint not in ENDPOINTS:
            raise Invalid(f"unknown endpoint {endpoint!r}")
        user = rng.choice(self.users)
        serial = self._next_serial()
        fresh = f"lt-{self.seed}-{serial}"
        if endpoint == "users-add":
            return Request(endpoint, headers=self._bearer(self.admin["token"]),
                           body={"name": fresh, "username": fresh, "password": fresh})
        if endpoint == "users-signin":
            return Request(endpoint, body={"username": user["username"],
                                           "password": user["password"]})
        if endpoint == "users-get":
            return Request(endpoint, headers=self._bearer(self.admin["token"]))
        if endpoint == "devices-add":
            return Request(endpoint, headers=self._bearer(user["token"]),
                           body={"name": fresh})
        if endpoint == "devices-get":
            return Request(endpoint, headers=self._bearer(user["token"]))
        if endpoint == "device-key-get":
            return Request(endpoint, headers=self._bearer(user["token"]),
                           path_params={"device_id": user["device_id"]})
        if endpoint == "sensors-add":
            return Request(endpoint, headers=self._bearer(user["token"]),
                           path_params={"device_id": user["device_id"]},
                           body={"name": fresh, "schema": {"kind": "float"}})
        if endpoint == "sensors-get":
            return Request(endpoint, headers=self._bearer(user["token"]),
                           path_params={"device_id": user["device_id"]})
        if endpoint == "consumers-add":
            return Request(endpoint, headers=self._bearer(user["token"]),
                           body={"name": fresh})
        if endpoint == "consumer-sensor-enable":
            return Request(endpoint, headers=self._bearer(user["token"]),
                           path_params={"consumer_id": user["consumer_id"],
                                        "sensor_id": user["sensor_id"]})
        if endpoint == "consumer-key-get":
            return Request(endpoint, headers=self._bearer(user["token"]),
                           path_params={"consumer_id": user["consumer_id"]})
        if endpoint == "consume-get":
            return Request(endpoint, headers=self._bearer(user["consumer_token"]),
                           path_params={"sensor_id": user["sensor_id"]})
        # gateway-ingest
        return Request(endpoint, headers=self._bearer(user["device_token"]),
                       body={"sensor_id": user["sensor_id"],
                             "device_id": user["device_id"],
                             "payload": round(rng.uniform(-20.0, 45.0), 3)})


class EmbeddedTarget:
    """Load target wrapping an in-process runtime on a simulated clock."""

    simulated = True

    def __init__(self, runtime: Runtime, pump: DrainPump | None = None):
        self.runtime = runtime
        self.pump = pump

    def submit(self, request: Request, now_ms: float) -> Response:
        return self.runtime.submit(request, now_ms)


class HttpTarget:
    """Load target speaking real HTTP to a served runtime."""

    simulated = False

    def __init__(self, base_url: str, timeout_s: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self._local = threading.local()

    def _session(self) -> requests_lib.Session:
        session = getattr(self._local, "session", None)
        if session is None:
            session = requests_lib.Session()
            self._local.session = session
        return session

    def url_for(self, request: Request) -> str:
        path = ENDPOINTS[request.endpoint].path
        for key, value in request.path_params.items():
            path = path.replace("{" + key + "}", str(value))
        return self.base_url + path

    def send(self, request: Request) -> Response:
        spec = ENDPOINTS[request.endpoint]
        started = time.perf_counter()
        raw = self._session().request(
            spec.method, self.url_for(request), headers=request.headers,
            json=request.body, timeout=self.timeout_s)
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        try:
            body = raw.json()
        except ValueError:
            body = None
        return Response(status=raw.status_code, body=body,
                        headers=dict(raw.headers), latency_ms=elapsed_ms)


@dataclass
class _SimVU:
    vu_id: int
    stopping: bool = False


@dataclass
class _LiveVU:
    vu_id: int
    stop: threading.Event = field(default_factory=threading.Event)
    thread: threading.Thread | None = None


def run_load(spec: ScenarioSpec, endpoint: str, target, fixtures: dict, *,
             seed: int, mode: str, tick_ms: float = 100.0,
             width_s: float = DEFAULT_BUCKET_WIDTH_S,
             manifest: dict | None = None) -> MetricsReport:
    """Drive `endpoint` with the scenario's VU schedule; returns the report."""
    factory = RequestFactory(fixtures, seed)
    if target.simulated:
        records, incomplete = _run_simulated(spec, endpoint, target, factory,
                                             seed, tick_ms)
        runtime = target.runtime
        invocations = runtime.invocation_count(endpoint)
        billed = runtime.billed_ms_total(endpoint)
    else:
        records, incomplete = _run_threads(spec, endpoint, target, factory,
                                           seed, tick_ms)
        invocations = len(records)
        billed = 0
    return MetricsReport.from_records(
        records, endpoint=endpoint, scenario=spec.name, mode=mode, seed=seed,
        time_scale=spec.time_scale, vu_scale=spec.vu_scale,
        duration_s=spec.duration_s, width_s=width_s,
        invocations=invocations, billed_ms_total=billed,
        incomplete=incomplete, manifest=manifest)


def _run_simulated(spec: ScenarioSpec, endpoint: str, target: EmbeddedTarget,
                   factory: RequestFactory, seed: int,
                   tick_ms: float) -> tuple[list[RequestRecord], bool]:
    """Deterministic event loop: population ticks, request firings, and
    pipeline pump runs interleaved on one simulated timeline."""
    clock = target.runtime.clock
    rng = random.Random(seed)
    duration_ms = spec.duration_s * 1000.0
    base_ms = clock.now_ms()
    events: list[tuple[float, int, str, object]] = []
    seq = 0

    def push(t_ms: float, kind: str, payload: object = None) -> None:
        nonlocal seq
        heapq.heappush(events, (t_ms, seq, kind, payload))
        seq += 1

    vus: list[_SimVU] = []
    active: dict[int, _SimVU] = {}
    next_vu_id = 1
    records: list[RequestRecord] = []

    push(0.0, "tick")
    if target.pump is not None:
        push(0.0, "pump")

    while events:
        t_ms, _, kind, payload = heapq.heappop(events)
        clock.advance_to_ms(base_ms + t_ms)
        if kind == "pump":
            target.pump.run_pending(base_ms + t_ms)
            next_pump = t_ms + target.pump.interval_ms
            if next_pump <= duration_ms:
                push(next_pump, "pump")
        elif kind == "tick":
            desired = vu_at(spec, t_ms / 1000.0)
            current = [vu for vu in vus if not vu.stopping]
            if desired > len(current):
                for _ in range(desired - len(current)):
                    vu = _SimVU(vu_id=next_vu_id)
                    next_vu_id += 1
                    vus.append(vu)
                    active[vu.vu_id] = vu
                    push(t_ms, "fire", vu.vu_id)
            elif desired < len(current):
                for vu in reversed(current):  # newest VUs leave first
                    if len(current) <= desired:
                        break
                    vu.stopping = True
                    current.remove(vu)
            next_tick = t_ms + tick_ms
            if next_tick <= duration_ms:
                push(next_tick, "tick")
        else:  # fire
            vu = active.get(payload)
            if vu is None or vu.stopping or t_ms >= duration_ms:
                active.pop(payload, None)
                continue
            request = factory.build(endpoint, rng)
            response = target.submit(request, base_ms + t_ms)
            records.append(RequestRecord(
                start_ms=t_ms, latency_ms=response.latency_ms,
                status=response.status,
                cold_start=response.headers.get("x-cold-start") == "true"))
            push(t_ms + max(response.latency_ms, MIN_CYCLE_MS), "fire", vu.vu_id)
    return records, False


def _run_threads(spec: ScenarioSpec, endpoint: str, target: HttpTarget,
                 factory: RequestFactory, seed: int,
                 tick_ms: float) -> tuple[list[RequestRecord], bool]:
    """Wall-clock driver: one thread per live VU, adjusted every tick."""
    rng = random.Random(seed)
    rng_lock = threading.Lock()
    records: list[RequestRecord] = []
    records_lock = threading.Lock()
    abort = threading.Event()
    duration_ms = spec.duration_s * 1000.0
    t0 = time.perf_counter()

    def elapsed_ms() -> float:
        return (time.perf_counter() - t0) * 1000.0

    def vu_loop(vu: _LiveVU) -> None:
        while not vu.stop.is_set() and not abort.is_set():
            start = elapsed_ms()
            if start >= duration_ms:
                break
            with rng_lock:
                request = factory.build(endpoint, rng)
            try:
                response = target.send(request)
            except requests_lib.exceptions.RequestException:
                abort.set()
                break
            with records_lock:
                records.append(RequestRecord(
                    start_ms=start, latency_ms=response.latency_ms,
                    status=response.status,
                    cold_start=response.headers.get("x-cold-start") == "true"))

    live: list[_LiveVU] = []
    next_id = 1
    while not abort.is_set():
        now = elapsed_ms()
        if now > duration_ms:
            break
        desired = vu_at(spec, min(now / 1000.0, spec.duration_s))
        while len(live) < desired:
            vu = _LiveVU(vu_id=next_id)
            next_id += 1
            vu.thread = threading.Thread(target=vu_loop, args=(vu,), daemon=True)
            live.append(vu)
            vu.thread.start()
        while len(live) > desired:
            vu = live.pop()  # newest VUs leave first
            vu.stop.set()
        time.sleep(tick_ms / 1000.0)
    for vu in live:
        vu.stop.set()
    for vu in live:
        if vu.thread is not None:
            vu.thread.join(timeout=30.0)
    return records, abort.is_set()


def load_fixtures(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
