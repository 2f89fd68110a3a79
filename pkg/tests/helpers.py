"""Shared builders for the test suite."""

from __future__ import annotations

from dataclasses import dataclass

from iotdesk.api import Platform, Request, Response
from iotdesk.auth import TokenSigner
from iotdesk.clock import SimulatedClock
from iotdesk.fixtures import EmbeddedClient, seed_fixtures
from iotdesk.pipeline import StreamRegistry
from iotdesk.runtime import DeploymentConfig, Runtime
from iotdesk.store import EntityStore

TEST_SECRET = "unit-test-secret"
ADMIN = ("admin", "admin-pw")


@dataclass
class Bench:
    """One fully wired application instance on a simulated clock."""

    clock: SimulatedClock
    store: EntityStore
    signer: TokenSigner
    registry: StreamRegistry
    platform: Platform
    runtime: Runtime

    def submit(self, request: Request | str, /, **kwargs) -> Response:
        if isinstance(request, str):
            request = Request(request, **kwargs)
        return self.runtime.submit(request, self.clock.now_ms())

    def dispatch(self, request: Request | str, /, **kwargs) -> Response:
        if isinstance(request, str):
            request = Request(request, **kwargs)
        return self.platform.dispatch(request)

    def signin(self, username: str, password: str) -> str:
        response = self.dispatch(Request(
            "users-signin", body={"username": username, "password": password}))
        assert response.status == 200, response.body
        return response.body["token"]

    def admin_token(self) -> str:
        return self.signin(*ADMIN)

    def seed(self, count: int) -> dict:
        return seed_fixtures(EmbeddedClient(self.platform), count,
                             admin_username=ADMIN[0], admin_password=ADMIN[1])


def bearer(token: str) -> dict:
    return {"authorization": f"Bearer {token}"}


def make_bench(mode: str = "monolith", *, sync_read: bool = True,
               ttl_seconds: int | None = None, store_path: str | None = None,
               start_ms: float = 0.0, **runtime_overrides) -> Bench:
    clock = SimulatedClock(start_ms)
    store = EntityStore(log_path=store_path)
    signer = TokenSigner(TEST_SECRET, ttl_seconds=ttl_seconds)
    registry = StreamRegistry()
    platform = Platform(store, signer, registry, clock, sync_read=sync_read)
    platform.bootstrap_admin("Administrator", *ADMIN)
    runtime_overrides.setdefault("throttling_enabled", False)
    runtime = Runtime(platform, DeploymentConfig(mode=mode, **runtime_overrides))
    return Bench(clock=clock, store=store, signer=signer, registry=registry,
                 platform=platform, runtime=runtime)


def make_user_with_stack(bench: Bench, username: str = "alice",
                         password: str = "alice-pw") -> dict:
    """One user owning a device, a float sensor, and a granted consumer."""
    admin = bench.admin_token()
    r = bench.dispatch(Request("users-add", headers=bearer(admin),
                               body={"name": username.title(), "username": username,
                                     "password": password}))
    assert r.status == 200, r.body
    user_id = r.body["id"]
    token = bench.signin(username, password)
    device_id = bench.dispatch(Request("devices-add", headers=bearer(token),
                                       body={"name": f"{username}-device"})).body["id"]
    sensor_id = bench.dispatch(Request(
        "sensors-add", headers=bearer(token), path_params={"device_id": device_id},
        body={"name": f"{username}-sensor", "schema": {"kind": "float"}})).body["id"]
    device_token = bench.dispatch(Request(
        "device-key-get", headers=bearer(token),
        path_params={"device_id": device_id})).body["token"]
    consumer_id = bench.dispatch(Request(
        "consumers-add", headers=bearer(token),
        body={"name": f"{username}-consumer"})).body["id"]
    bench.dispatch(Request("consumer-sensor-enable", headers=bearer(token),
                           path_params={"consumer_id": consumer_id,
                                        "sensor_id": sensor_id}))
    consumer_token = bench.dispatch(Request(
        "consumer-key-get", headers=bearer(token),
        path_params={"consumer_id": consumer_id})).body["token"]
    return {
        "user_id": user_id, "username": username, "password": password,
        "token": token, "device_id": device_id, "sensor_id": sensor_id,
        "device_token": device_token, "consumer_id": consumer_id,
        "consumer_token": consumer_token,
    }
