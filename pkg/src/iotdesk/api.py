"""Endpoint layer: the middleware-chain handlers behind every API route.

Each endpoint is two handler units: an auth stage that only parses and
verifies the bearer token (it never touches the entity store), and a
controller stage that runs the business logic against the store and
pipeline given pre-built claims. Keeping the stages separable is what lets
the deployment runtimes execute them as one routed process, as two chained
function pools, or as a single fused function, with identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import auth as authmod
from .auth import Claims, TokenSigner, hash_password
from .clock import Clock
from .errors import ApiError, Forbidden, Invalid, NotFound, Unauthorized
from .payloads import PayloadSchema
from .pipeline import SensorReading, StreamRegistry
from .store import EntityStore, ROLES


@dataclass
class Request:
    endpoint: str
    headers: dict = field(default_factory=dict)
    path_params: dict = field(default_factory=dict)
    body: dict | list | None = None


@dataclass
class Response:
    status: int
    body: dict | list | None
    headers: dict = field(default_factory=dict)
    latency_ms: float = 0.0  # annotated by the deployment runtime


@dataclass(frozen=True)
class EndpointSpec:
    name: str
    method: str
    path: str  # template with {param} placeholders
    auth_kind: str | None  # token kind required, or None
    admin_only: bool = False  # role gate applied inside the controller


ENDPOINTS: dict[str, EndpointSpec] = {e.name: e for e in [
    EndpointSpec("users-add", "POST", "/users", "user", admin_only=True),
    EndpointSpec("users-signin", "POST", "/users/signin", None),
    EndpointSpec("users-get", "GET", "/users", "user", admin_only=True),
    EndpointSpec("devices-add", "POST", "/devices", "user"),
    EndpointSpec("devices-get", "GET", "/devices", "user"),
    EndpointSpec("device-key-get", "GET", "/devices/{device_id}/key", "user"),
    EndpointSpec("sensors-add", "POST", "/devices/{device_id}/sensors", "user"),
    EndpointSpec("sensors-get", "GET", "/devices/{device_id}/sensors", "user"),
    EndpointSpec("consumers-add", "POST", "/consumers", "user"),
    EndpointSpec("consumer-sensor-enable", "POST", "/consumers/{consumer_id}/sensors/{sensor_id}",
                 "user"),
    EndpointSpec("consumer-key-get", "GET", "/consumers/{consumer_id}/key", "user"),
    EndpointSpec("consume-get", "GET", "/consume/{sensor_id}", "consumer"),
    EndpointSpec("gateway-ingest", "POST", "/gateway/http", "device"),
]}


def error_response(exc: ApiError) -> Response:
    return Response(status=exc.status, body=exc.body())


def _bearer_token(request: Request) -> str:
    header = request.headers.get("authorization") or request.headers.get("Authorization")
    if not header or not header.startswith("Bearer "):
        raise Unauthorized("missing bearer token")
    return header[len("Bearer "):]


def _int_param(request: Request, name: str) -> int:
    try:
        return int(request.path_params[name])
    except KeyError:
        raise Invalid(f"missing path parameter {name!r}") from None
    except (TypeError, ValueError):
        raise Invalid(f"path parameter {name!r} must be an integer") from None


def _body_field(request: Request, name: str, kind=str, required: bool = True):
    body = request.body if isinstance(request.body, dict) else {}
    if name not in body:
        if required:
            raise Invalid(f"missing body field {name!r}")
        return None
    value = body[name]
    if kind is int and isinstance(value, bool):
        raise Invalid(f"body field {name!r} must be an integer")
    if not isinstance(value, kind):
        raise Invalid(f"body field {name!r} has the wrong type")
    return value


class Platform:
    """The applications's shared state plus all endpoint handler units."""

    def __init__(self, store: EntityStore, signer: TokenSigner, registry: StreamRegistry,
                 clock: Clock, sync_read: bool = False, query_limit: int | None = None):
        self.store = store
        self.signer = signer
        self.registry = registry
        self.clock = clock
        self.sync_read = sync_read
        self.query_limit = query_limit
        self._controllers = {
            "users-add": self._users_add,
            "users-signin": self._users_signin,
            "users-get": self._users_get,
            "devices-add": self._devices_add,
            "devices-get": self._devices_get,
            "device-key-get": self._device_key_get,
            "sensors-add": self._sensors_add,
            "sensors-get": self._sensors_get,
            "consumers-add": self._consumers_add,
            "consumer-sensor-enable": self._consumer_sensor_enable,
            "consumer-key-get": self._consumer_key_get,
            "consume-get": self._consume_get,
            "gateway-ingest": self._gateway_ingest,
        }

    def bootstrap_admin(self, name: str, username: str, password: str) -> None:
        """Create the initial admin account on an empty store."""
        if not self.store.list_users():
            self.store.add_user(name, username, hash_password(password), "admin")

    def provision_existing_streams(self) -> None:
        """Re-register pipeline streams for sensors loaded from a durable store."""
        for sensor in sorted(self.store.sensors.values(), key=lambda s: s.id):
            if not self.registry.is_provisioned(sensor.id):
                self.registry.provision_stream(sensor.id, sensor.schema)

    # -- handler stages ---------------------------------------------------

    def execute_auth(self, request: Request, expected_kind: str) -> Claims | Response:
        """Auth handler unit: token -> Claims, or a 401 response.

        Touches only the signer, never the store, so it can run in a
        shared function pool in front of any endpoint.
        """
        try:
            token = _bearer_token(request)
            return self.signer.verify(token, expected_kind, now_s=self.clock.now_s())
        except Unauthorized as exc:
            return error_response(exc)

    def execute_controller(self, endpoint: str, claims: Claims | None,
                           request: Request) -> Response:
        """Controller handler unit; never raises, always returns a Response."""
        controller = self._controllers.get(endpoint)
        if controller is None:
            return error_response(NotFound(f"unknown endpoint {endpoint!r}"))
        spec = ENDPOINTS[endpoint]
        try:
            if spec.admin_only and (claims is None or claims.role != "admin"):
                raise Forbidden("admin role required")
            return controller(claims, request)
        except ApiError as exc:
            return error_response(exc)

    def dispatch(self, request: Request) -> Response:
        """Full middleware chain: auth stage, then the controller stage."""
        spec = ENDPOINTS.get(request.endpoint)
        if spec is None:
            return error_response(NotFound(f"unknown endpoint {request.endpoint!r}"))
        claims = None
        if spec.auth_kind is not None:
            result = self.execute_auth(request, spec.auth_kind)
            if isinstance(result, Response):
                return result
            claims = result
        return self.execute_controller(request.endpoint, claims, request)

    # -- controllers ------------------------------------------------------

    def _users_add(self, claims: Claims, request: Request) -> Response:
        name = _body_field(request, "name")
        username = _body_field(request, "username")
        password = _body_field(request, "password")
        role = _body_field(request, "role", required=False) or "user"
        if role not in ROLES:
            raise Invalid(f"role must be one of {ROLES}")
        if not username or not password:
            raise Invalid("username and password must not be empty")
        user = self.store.add_user(name, username, hash_password(password), role)
        return Response(200, {"id": user.id})

    def _users_signin(self, claims: Claims | None, request: Request) -> Response:
        username = _body_field(request, "username")
        password = _body_field(request, "password")
        token = authmod.signin(self.store, self.signer, username, password, self.clock.now_s())
        return Response(200, {"token": token})

    def _users_get(self, claims: Claims, request: Request) -> Response:
        return Response(200, [u.public_json() for u in self.store.list_users()])

    def _devices_add(self, claims: Claims, request: Request) -> Response:
        name = _body_field(request, "name")
        device = self.store.add_device(claims.subject_id, name)
        return Response(200, {"id": device.id})

    def _devices_get(self, claims: Claims, request: Request) -> Response:
        return Response(200, [d.public_json() for d in self.store.devices_of(claims.subject_id)])

    def _owned_device(self, claims: Claims, device_id: int):
        device = self.store.get_device(device_id)
        if device.owner_user_id != claims.subject_id:
            raise Forbidden("device belongs to another user")
        return device

    def _device_key_get(self, claims: Claims, request: Request) -> Response:
        device_id = _int_param(request, "device_id")
        token = authmod.device_key(self.store, self.signer, claims, device_id,
                                   self.clock.now_s())
        return Response(200, {"token": token})

    def _sensors_add(self, claims: Claims, request: Request) -> Response:
        device_id = _int_param(request, "device_id")
        self._owned_device(claims, device_id)
        name = _body_field(request, "name")
        schema = PayloadSchema.from_json(_body_field(request, "schema", kind=(dict, str)))
        sensor = self.store.add_sensor(device_id, name, schema)
        try:
            self.registry.provision_stream(sensor.id, schema)
        except ApiError:
            self.store.delete("sensor", sensor.id)
            raise
        return Response(200, {"id": sensor.id})

    def _sensors_get(self, claims: Claims, request: Request) -> Response:
        device_id = _int_param(request, "device_id")
        self._owned_device(claims, device_id)
        return Response(200, [s.public_json() for s in self.store.sensors_of(device_id)])

    def _consumers_add(self, claims: Claims, request: Request) -> Response:
        name = _body_field(request, "name")
        consumer = self.store.add_consumer(claims.subject_id, name)
        return Response(200, {"id": consumer.id})

    def _consumer_sensor_enable(self, claims: Claims, request: Request) -> Response:
        consumer_id = _int_param(request, "consumer_id")
        sensor_id = _int_param(request, "sensor_id")
        consumer = self.store.get_consumer(consumer_id)
        if consumer.owner_user_id != claims.subject_id:
            raise Forbidden("consumer belongs to another user")
        sensor = self.store.get_sensor(sensor_id)
        self._owned_device(claims, sensor.device_id)
        self.store.add_grant(consumer_id, sensor_id)  # idempotent: re-grant acks
        return Response(200, {"ok": True})

    def _consumer_key_get(self, claims: Claims, request: Request) -> Response:
        consumer_id = _int_param(request, "consumer_id")
        token = authmod.consumer_key(self.store, self.signer, claims, consumer_id,
                                     self.clock.now_s())
        return Response(200, {"token": token})

    def _consume_get(self, claims: Claims, request: Request) -> Response:
        sensor_id = _int_param(request, "sensor_id")
        self.store.get_sensor(sensor_id)
        if not self.store.has_grant(claims.subject_id, sensor_id):
            raise Forbidden("consumer has no grant for this sensor")
        if self.sync_read:
            self.registry.drain(sensor_id)
        limit = None
        if "limit" in request.path_params:
            try:
                limit = int(request.path_params["limit"])
            except (TypeError, ValueError):
                raise Invalid("limit must be an integer") from None
        if limit is None:
            limit = self.query_limit
        readings = self.registry.query(sensor_id, limit)
        return Response(200, [r.to_json() for r in readings])

    def _gateway_ingest(self, claims: Claims, request: Request) -> Response:
        sensor_id = _body_field(request, "sensor_id", kind=int)
        sensor = self.store.get_sensor(sensor_id)
        if sensor.device_id != claims.subject_id:
            raise Forbidden("device token does not match the sensor's device")
        body_device = _body_field(request, "device_id", kind=int, required=False)
        if body_device is not None and body_device != claims.subject_id:
            raise Forbidden("device id in body does not match the token")
        body = request.body if isinstance(request.body, dict) else {}
        if "payload" not in body:
            raise Invalid("missing body field 'payload'")
        payload = body["payload"]
        mismatch = self.registry.validate(sensor_id, payload)
        if mismatch is not None:
            raise Invalid(f"payload does not match schema: {mismatch.to_json()}")
        timestamp = body.get("timestamp")
        if timestamp is None:
            timestamp = int(self.clock.now_ms())
        reading = SensorReading(sensor_id=sensor_id, timestamp_ms=timestamp, payload=payload)
        offset = self.registry.publish(sensor_id, reading)
        return Response(200, {"offset": offset})
