"""Deployment runtimes: one application, three execution shapes.

The same endpoint handler units run either inside a single routed process
scaled by a replica autoscaler (monolith), as chained function pools with a
shared authentication pool (faas_sequenced), or as one fused function pool
per endpoint (faas_fused). Business results are identical across modes by
construction — every mode composes the same auth and controller stages —
while latency, cold starts, scale-to-zero, and throttling differ.

All timing is modeled against an injectable clock, so the runtime can be
driven deterministically inside a simulation or serve real HTTP traffic,
sleeping out the modeled latency.
"""

from __future__ import annotations

import heapq
import math
import threading
from dataclasses import dataclass, field

from .api import ENDPOINTS, Platform, Request, Response, error_response
from .auth import Claims
from .errors import Invalid, Saturated, Throttled

MODES = ("monolith", "faas_sequenced", "faas_fused")

# CLI-facing spellings accepted for each mode.
MODE_ALIASES = {
    "monolith": "monolith",
    "faas-seq": "faas_sequenced",
    "faas_sequenced": "faas_sequenced",
    "faas-sequenced": "faas_sequenced",
    "faas-fused": "faas_fused",
    "faas_fused": "faas_fused",
}

AUTH_POOL = "auth"  # the one pool shared by every endpoint's auth leg

BILLING_GRANULARITY_MS = 100.0


def normalize_mode(name: str) -> str:
    try:
        return MODE_ALIASES[name]
    except KeyError:
        raise Invalid(f"unknown runtime mode {name!r}; expected one of "
                      "monolith, faas-seq, faas-fused") from None


@dataclass
class DeploymentConfig:
    mode: str = "monolith"
    # monolith replica model
    hpa_target_utilization: float = 0.5
    max_replicas: int = 40
    replica_capacity: int = 8
    initial_replicas: int = 1
    hpa_sync_period_s: float = 15.0
    # function pools
    cold_start_ms: float = 500.0
    idle_timeout_s: float = 60.0
    max_instances: int = 20
    instance_concurrency: int = 100
    per_minute_invocation_limit: int = 25000
    max_concurrent_invocations: int = 9999
    function_memory_mib: int = 256
    throttling_enabled: bool = True
    # modeled work
    service_time_ms: float = 10.0
    auth_service_time_ms: float = 2.0
    invocation_overhead_ms: float = 5.0

    def __post_init__(self):
        self.mode = normalize_mode(self.mode)
        if not 0.0 < self.hpa_target_utilization <= 1.0:
            raise Invalid("hpa_target_utilization must be in (0, 1]")
        for name in ("max_replicas", "replica_capacity", "initial_replicas",
                     "max_instances", "instance_concurrency",
                     "per_minute_invocation_limit", "max_concurrent_invocations",
                     "function_memory_mib"):
            if getattr(self, name) <= 0:
                raise Invalid(f"{name} must be positive")
        for name in ("hpa_sync_period_s", "cold_start_ms", "idle_timeout_s",
                     "service_time_ms", "auth_service_time_ms",
                     "invocation_overhead_ms"):
            if getattr(self, name) < 0:
                raise Invalid(f"{name} must not be negative")
        if self.initial_replicas > self.max_replicas:
            raise Invalid("initial_replicas must not exceed max_replicas")


def billed_ms(duration_ms: float) -> int:
    """Billable duration: rounded up to 100 ms, minimum one granule."""
    granules = max(1, math.ceil(duration_ms / BILLING_GRANULARITY_MS))
    return int(granules * BILLING_GRANULARITY_MS)


@dataclass(frozen=True)
class InvocationRecord:
    endpoint: str
    leg: str  # "auth", "controller", "fused", or "monolith"
    start_ms: float
    end_ms: float
    status: int
    cold_start: bool

    @property
    def billed_ms(self) -> int:
        return billed_ms(self.end_ms - self.start_ms)


def hpa_step(current_replicas: int, observed_utilization: float,
             target_utilization: float, max_replicas: int) -> int:
    """One autoscaler evaluation: desired = ceil(current × observed/target),
    clamped to [1, max_replicas]."""
    if current_replicas < 1:
        raise Invalid("current_replicas must be at least 1")
    desired = math.ceil(current_replicas * observed_utilization / target_utilization)
    return max(1, min(max_replicas, desired))


@dataclass
class FunctionInstance:
    instance_id: int
    created_ms: float
    busy: int = 0
    last_used_ms: float = 0.0


class FunctionPool:
    """Logical execution slots for one function, with scale-to-zero.

    Instances are acquired least-recently-used first; a new (cold) instance
    is created only when no warm instance has spare concurrency; instances
    idle longer than the timeout are reaped. Releases are applied lazily
    from a schedule so the pool can run inside a simulated clock.
    """

    def __init__(self, name: str, max_instances: int, instance_concurrency: int,
                 idle_timeout_s: float):
        self.name = name
        self.max_instances = max_instances
        self.instance_concurrency = instance_concurrency
        self.idle_timeout_ms = idle_timeout_s * 1000.0
        self.instances: dict[int, FunctionInstance] = {}
        self._releases: list[tuple[float, int]] = []  # (release_ms, instance_id)
        self._next_id = 1
        self.cold_starts = 0
        self.invocations = 0

    def process_releases(self, now_ms: float) -> None:
        while self._releases and self._releases[0][0] <= now_ms:
            release_ms, iid = heapq.heappop(self._releases)
            instance = self.instances.get(iid)
            if instance is not None:
                instance.busy -= 1
                instance.last_used_ms = max(instance.last_used_ms, release_ms)

    def reap_idle(self, now_ms: float) -> int:
        """Remove instances idle beyond the timeout; busy instances stay."""
        self.process_releases(now_ms)
        dead = [iid for iid, inst in self.instances.items()
                if inst.busy == 0 and now_ms - inst.last_used_ms > self.idle_timeout_ms]
        for iid in dead:
            del self.instances[iid]
        return len(dead)

    def acquire(self, now_ms: float) -> tuple[int, bool]:
        """Claim a slot; returns (instance_id, cold_start). Raises Saturated
        when all instances are at full concurrency and the pool is capped."""
        self.process_releases(now_ms)
        self.reap_idle(now_ms)
        free = [inst for inst in self.instances.values()
                if inst.busy < self.instance_concurrency]
        if free:
            inst = min(free, key=lambda i: (i.last_used_ms, i.instance_id))
            inst.busy += 1
            inst.last_used_ms = now_ms
            self.invocations += 1
            return inst.instance_id, False
        if len(self.instances) < self.max_instances:
            iid = self._next_id
            self._next_id += 1
            self.instances[iid] = FunctionInstance(
                instance_id=iid, created_ms=now_ms, busy=1, last_used_ms=now_ms)
            self.cold_starts += 1
            self.invocations += 1
            return iid, True
        raise Saturated(f"pool {self.name!r} is at capacity")

    def schedule_release(self, instance_id: int, release_ms: float) -> None:
        heapq.heappush(self._releases, (release_ms, instance_id))

    def busy_total(self, now_ms: float) -> int:
        self.process_releases(now_ms)
        return sum(inst.busy for inst in self.instances.values())

    def stats(self) -> dict:
        return {
            "instances": len(self.instances),
            "cold_starts": self.cold_starts,
            "invocations": self.invocations,
        }


class Runtime:
    """Executes endpoint requests under one deployment mode.

    ``submit(request, now_ms)`` computes the response and its modeled
    latency without consuming wall time; ``handle(request)`` wraps it for
    service mode, sleeping the modeled latency on the runtime's clock.
    """

    def __init__(self, platform: Platform, config: DeploymentConfig):
        self.platform = platform
        self.config = config
        self.mode = config.mode
        self.clock = platform.clock
        self.records: list[InvocationRecord] = []
        self._lock = threading.RLock()
        # monolith state
        self.replicas = config.initial_replicas
        self._completions: list[float] = []  # end times of admitted requests
        self._last_hpa_sync_ms: float | None = None
        # function-pool state
        self.pools: dict[str, FunctionPool] = {}
        if self.mode == "faas_sequenced":
            self.pools[AUTH_POOL] = self._new_pool(AUTH_POOL)
            for name in ENDPOINTS:
                self.pools[name] = self._new_pool(name)
        elif self.mode == "faas_fused":
            for name in ENDPOINTS:
                self.pools[name] = self._new_pool(name)
        # throttle state (faas modes)
        self._window_index: int | None = None
        self._window_count = 0
        self._leg_ends: list[float] = []  # end times of in-flight invocations

    def _new_pool(self, name: str) -> FunctionPool:
        return FunctionPool(name, self.config.max_instances,
                            self.config.instance_concurrency,
                            self.config.idle_timeout_s)

    # -- public entry points ----------------------------------------------

    def submit(self, request: Request, now_ms: float | None = None) -> Response:
        """Execute a request at simulated time ``now_ms``; the returned
        response carries the modeled latency and runtime headers."""
        if now_ms is None:
            now_ms = self.clock.now_ms()
        with self._lock:
            if self.mode == "monolith":
                response = self._submit_monolith(request, now_ms)
            elif self.mode == "faas_sequenced":
                response = self._submit_sequenced(request, now_ms)
            else:
                response = self._submit_fused(request, now_ms)
        response.headers.setdefault("x-cold-start", "false")
        response.headers["x-runtime-mode"] = self.mode
        return response

    def handle(self, request: Request) -> Response:
        """Service-mode execution: compute the response, then sleep out the
        modeled latency on the clock before returning it."""
        response = self.submit(request, self.clock.now_ms())
        if response.latency_ms > 0:
            self.clock.sleep_ms(response.latency_ms)
        return response

    # -- shared helpers -----------------------------------------------------

    def _auth_kind(self, request: Request) -> str | None:
        spec = ENDPOINTS.get(request.endpoint)
        return spec.auth_kind if spec is not None else None

    def _run_auth(self, request: Request) -> Claims | Response | None:
        """Run the auth stage if the endpoint needs one; None = no auth leg."""
        kind = self._auth_kind(request)
        if kind is None:
            return None
        return self.platform.execute_auth(request, kind)

    def _record(self, request: Request, leg: str, start_ms: float, end_ms: float,
                status: int, cold: bool) -> None:
        self.records.append(InvocationRecord(
            endpoint=request.endpoint, leg=leg, start_ms=start_ms, end_ms=end_ms,
            status=status, cold_start=cold))

    # -- monolith -----------------------------------------------------------

    def _capacity(self) -> int:
        return self.replicas * self.config.replica_capacity

    def _monolith_hpa_sync(self, now_ms: float) -> None:
        """Apply autoscaler evaluations for every sync boundary that elapsed
        since the last submission (lazy stepping under the simulated clock)."""
        period_ms = self.config.hpa_sync_period_s * 1000.0
        if self._last_hpa_sync_ms is None:
            self._last_hpa_sync_ms = now_ms
            return
        if period_ms <= 0:
            return
        while self._last_hpa_sync_ms + period_ms <= now_ms:
            boundary = self._last_hpa_sync_ms + period_ms
            in_flight = sum(1 for end in self._completions if end > boundary)
            observed = in_flight / self._capacity()
            self.replicas = hpa_step(self.replicas, observed,
                                     self.config.hpa_target_utilization,
                                     self.config.max_replicas)
            self._last_hpa_sync_ms = boundary

    def _submit_monolith(self, request: Request, now_ms: float) -> Response:
        self._monolith_hpa_sync(now_ms)
        while self._completions and self._completions[0] <= now_ms:
            heapq.heappop(self._completions)
        active = len(self._completions)
        capacity = self._capacity()
        if active < capacity:
            start = now_ms
        else:
            # Wait for enough in-flight requests to finish to open a slot.
            kth = active - capacity + 1
            start = heapq.nsmallest(kth, self._completions)[-1]
        auth_result = self._run_auth(request)
        service = 0.0
        if isinstance(auth_result, Response):  # rejected: no controller work
            service = self.config.auth_service_time_ms
            response = auth_result
        else:
            if auth_result is not None:
                service += self.config.auth_service_time_ms
            service += self.config.service_time_ms
            response = self.platform.execute_controller(
                request.endpoint, auth_result, request)
        end = start + service
        heapq.heappush(self._completions, end)
        self._record(request, "monolith", start, end, response.status, False)
        response.latency_ms = end - now_ms
        response.headers["x-cold-start"] = "false"
        return response

    # -- faas shared mechanics ----------------------------------------------

    def _throttle_check(self, now_ms: float) -> None:
        """Enforce the per-minute invocation quota and the platform-wide
        concurrent-invocation cap; rejected calls consume no quota."""
        if not self.config.throttling_enabled:
            return
        window = int(now_ms // 60_000)
        if window != self._window_index:
            self._window_index = window
            self._window_count = 0
        if self._window_count >= self.config.per_minute_invocation_limit:
            raise Throttled("per-minute invocation limit reached")
        while self._leg_ends and self._leg_ends[0] <= now_ms:
            heapq.heappop(self._leg_ends)
        if len(self._leg_ends) >= self.config.max_concurrent_invocations:
            raise Throttled("too many concurrent invocations")
        self._window_count += 1

    def _invoke(self, pool_name: str, request: Request, leg: str, arrival_ms: float,
                exec_ms: float, run) -> tuple[Response | object, float, bool]:
        """One function invocation: interconnect hop, instance acquisition
        (possibly cold), then the handler body ``run()``.

        Returns (result, completion_ms, cold). Raises Throttled/Saturated
        with the latency accumulated so far attached as ``.latency_ms``.
        """
        try:
            self._throttle_check(arrival_ms)
        except Throttled as exc:
            exc.latency_ms = self.config.invocation_overhead_ms
            raise
        t = arrival_ms + self.config.invocation_overhead_ms
        pool = self.pools[pool_name]
        try:
            iid, cold = pool.acquire(t)
        except Saturated as exc:
            exc.latency_ms = t - arrival_ms
            raise
        if cold:
            t += self.config.cold_start_ms
        start = t
        result = run()
        end = start + exec_ms
        pool.schedule_release(iid, end)
        if self.config.throttling_enabled:
            heapq.heappush(self._leg_ends, end)
        status = result.status if isinstance(result, Response) else 200
        self._record(request, leg, start, end, status, cold)
        return result, end, cold

    def _reject(self, request: Request, exc, now_ms: float,
                elapsed_ms: float) -> Response:
        response = error_response(exc)
        response.latency_ms = elapsed_ms + getattr(exc, "latency_ms", 0.0)
        response.headers["x-cold-start"] = "false"
        return response

    # -- faas_sequenced -------------------------------------------------------

    def _submit_sequenced(self, request: Request, now_ms: float) -> Response:
        """OW-style: auth runs in the shared auth pool, then the endpoint's
        controller pool; each leg pays the interconnect overhead."""
        kind = self._auth_kind(request)
        t = now_ms
        cold_any = False
        claims = None
        if kind is not None:
            try:
                result, t, cold = self._invoke(
                    AUTH_POOL, request, "auth", t, self.config.auth_service_time_ms,
                    lambda: self.platform.execute_auth(request, kind))
            except (Throttled, Saturated) as exc:
                return self._reject(request, exc, now_ms, 0.0)
            cold_any = cold_any or cold
            if isinstance(result, Response):  # 401 short-circuits the chain
                result.latency_ms = t - now_ms
                result.headers["x-cold-start"] = "true" if cold_any else "false"
                return result
            claims = result
        try:
            response, t, cold = self._invoke(
                request.endpoint, request, "controller", t, self.config.service_time_ms,
                lambda: self.platform.execute_controller(request.endpoint, claims, request))
        except (Throttled, Saturated) as exc:
            return self._reject(request, exc, now_ms, t - now_ms)
        cold_any = cold_any or cold
        response.latency_ms = t - now_ms
        response.headers["x-cold-start"] = "true" if cold_any else "false"
        return response

    # -- faas_fused -----------------------------------------------------------

    def _submit_fused(self, request: Request, now_ms: float) -> Response:
        """GCR-style: one invocation per request; auth runs inlined inside
        the endpoint's own fused function."""
        kind = self._auth_kind(request)
        try:
            self._throttle_check(now_ms)
        except Throttled as exc:
            exc.latency_ms = self.config.invocation_overhead_ms
            return self._reject(request, exc, now_ms, 0.0)
        t = now_ms + self.config.invocation_overhead_ms
        pool = self.pools[request.endpoint]
        try:
            iid, cold = pool.acquire(t)
        except Saturated as exc:
            exc.latency_ms = t - now_ms
            return self._reject(request, exc, now_ms, 0.0)
        if cold:
            t += self.config.cold_start_ms
        claims = None
        auth_rejected = False
        if kind is not None:
            result = self.platform.execute_auth(request, kind)
            if isinstance(result, Response):
                response = result
                auth_rejected = True
            else:
                claims = result
        if not auth_rejected:
            response = self.platform.execute_controller(request.endpoint, claims, request)
        # Execution time depends on how far the chain ran inside the function.
        exec_ms = self.config.service_time_ms
        if kind is not None:
            exec_ms = (self.config.auth_service_time_ms if auth_rejected
                       else self.config.auth_service_time_ms + self.config.service_time_ms)
        start = t
        end = start + exec_ms
        pool.schedule_release(iid, end)
        if self.config.throttling_enabled:
            heapq.heappush(self._leg_ends, end)
        self._record(request, "fused", start, end, response.status, cold)
        response.latency_ms = end - now_ms
        response.headers["x-cold-start"] = "true" if cold else "false"
        return response

    # -- introspection ---------------------------------------------------------

    def pool_stats(self) -> dict[str, dict]:
        return {name: pool.stats() for name, pool in sorted(self.pools.items())}

    def billed_ms_total(self, endpoint: str | None = None) -> int:
        return sum(r.billed_ms for r in self.records
                   if endpoint is None or r.endpoint == endpoint)

    def invocation_count(self, endpoint: str | None = None) -> int:
        return sum(1 for r in self.records
                   if endpoint is None or r.endpoint == endpoint)

    def cold_start_count(self) -> int:
        return sum(1 for r in self.records if r.cold_start)

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "replicas": self.replicas,
            "invocations": self.invocation_count(),
            "cold_starts": self.cold_start_count(),
            "billed_ms_total": self.billed_ms_total(),
            "pools": self.pool_stats(),
        }
