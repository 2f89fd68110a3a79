"""Fixture provisioning: dummy users with devices, sensors, and consumers.

The seeder drives the public API only (never the store directly), so the
same code provisions an embedded platform or a remote server. Each fixture
user owns one device with one float sensor and one consumer granted access
to that sensor, plus pre-issued user/device/consumer tokens. Re-seeding
reuses whatever already exists: usernames sign in instead of re-registering,
devices and sensors are rediscovered through list endpoints, and consumers
recorded in a previous manifest are revalidated before anything new is made.
"""

from __future__ import annotations

import base64
import json

from .api import Platform, Request, Response
from .errors import Invalid
from .harness import HttpTarget


class EmbeddedClient:
    """Seeding client speaking directly to an in-process platform."""

    def __init__(self, platform: Platform):
        self.platform = platform

    def call(self, endpoint: str, headers: dict | None = None,
             path_params: dict | None = None, body=None) -> Response:
        return self.platform.dispatch(Request(
            endpoint=endpoint, headers=headers or {},
            path_params=path_params or {}, body=body))


class HttpClient:
    """Seeding client speaking to a served runtime over HTTP."""

    def __init__(self, base_url: str, timeout_s: float = 30.0):
        self.target = HttpTarget(base_url, timeout_s=timeout_s)

    def call(self, endpoint: str, headers: dict | None = None,
             path_params: dict | None = None, body=None) -> Response:
        return self.target.send(Request(
            endpoint=endpoint, headers=headers or {},
            path_params=path_params or {}, body=body))


def _bearer(token: str) -> dict:
    return {"authorization": f"Bearer {token}"}


def token_subject(token: str) -> int:
    """Read the subject id out of a bearer token without verifying it."""
    payload = token.split(".")[1]
    padded = payload + "=" * (-len(payload) % 4)
    return json.loads(base64.urlsafe_b64decode(padded))["sub"]


def _expect(response: Response, what: str) -> Response:
    if response.status != 200:
        raise Invalid(f"seeding failed at {what}: "
                      f"status {response.status} body {response.body}")
    return response


def _signin(client, username: str, password: str) -> str:
    response = _expect(client.call("users-signin",
                                   body={"username": username, "password": password}),
                       f"signin {username}")
    return response.body["token"]


def _ensure_user(client, admin_token: str, name: str, username: str,
                 password: str) -> str:
    """Create the user if new, then sign in either way; returns a token."""
    response = client.call("users-add", headers=_bearer(admin_token),
                           body={"name": name, "username": username,
                                 "password": password})
    if response.status not in (200, 409):  # 409: username already seeded
        _expect(response, f"users-add {username}")
    return _signin(client, username, password)


def _ensure_device(client, token: str, name: str) -> int:
    devices = _expect(client.call("devices-get", headers=_bearer(token)),
                      "devices-get").body
    for device in devices:
        if device["name"] == name:
            return device["id"]
    return _expect(client.call("devices-add", headers=_bearer(token),
                               body={"name": name}),
                   f"devices-add {name}").body["id"]


def _ensure_sensor(client, token: str, device_id: int, name: str) -> int:
    sensors = _expect(client.call("sensors-get", headers=_bearer(token),
                                  path_params={"device_id": device_id}),
                      "sensors-get").body
    for sensor in sensors:
        if sensor["name"] == name:
            return sensor["id"]
    return _expect(client.call("sensors-add", headers=_bearer(token),
                               path_params={"device_id": device_id},
                               body={"name": name, "schema": {"kind": "float"}}),
                   f"sensors-add {name}").body["id"]


def _ensure_consumer(client, token: str, name: str,
                     previous_id: int | None) -> int:
    """Reuse the consumer from a previous manifest when it still checks out;
    there is no consumer list endpoint, so the manifest is the only memory."""
    if previous_id is not None:
        probe = client.call("consumer-key-get", headers=_bearer(token),
                            path_params={"consumer_id": previous_id})
        if probe.status == 200:
            return previous_id
    return _expect(client.call("consumers-add", headers=_bearer(token),
                               body={"name": name}),
                   f"consumers-add {name}").body["id"]


def seed_fixtures(client, count: int, *, admin_username: str,
                  admin_password: str, previous: dict | None = None) -> dict:
    """Provision `count` fixture users and return the fixtures manifest."""
    if count < 0:
        raise Invalid("fixture count must not be negative")
    admin_token = _signin(client, admin_username, admin_password)
    previous_users = {u["username"]: u for u in (previous or {}).get("users", [])}
    users = []
    for i in range(1, count + 1):
        username = f"vu-{i:03d}"
        password = f"pw-{i:03d}"
        token = _ensure_user(client, admin_token, f"Virtual User {i}",
                             username, password)
        device_id = _ensure_device(client, token, f"device-{i:03d}")
        sensor_id = _ensure_sensor(client, token, device_id, f"sensor-{i:03d}")
        device_token = _expect(
            client.call("device-key-get", headers=_bearer(token),
                        path_params={"device_id": device_id}),
            "device-key-get").body["token"]
        prior = previous_users.get(username, {})
        consumer_id = _ensure_consumer(client, token, f"consumer-{i:03d}",
                                       prior.get("consumer_id"))
        _expect(client.call("consumer-sensor-enable", headers=_bearer(token),
                            path_params={"consumer_id": consumer_id,
                                         "sensor_id": sensor_id}),
                "consumer-sensor-enable")
        consumer_token = _expect(
            client.call("consumer-key-get", headers=_bearer(token),
                        path_params={"consumer_id": consumer_id}),
            "consumer-key-get").body["token"]
        users.append({
            "user_id": token_subject(token),
            "username": username,
            "password": password,
            "token": token,
            "device_id": device_id,
            "device_token": device_token,
            "sensor_id": sensor_id,
            "consumer_id": consumer_id,
            "consumer_token": consumer_token,
        })
    return {
        "admin": {"username": admin_username, "password": admin_password,
                  "token": admin_token},
        "count": count,
        "users": users,
    }


def write_fixtures(manifest: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_fixtures(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
