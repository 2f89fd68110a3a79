"""Entity registry: users, devices, sensors, consumers, and access grants.

The store is the single source of truth for ownership checks. It hands out
per-kind sequential integer ids, enforces referential integrity on create
and delete, and can optionally write every mutation to an append-only JSONL
log that `EntityStore.load` replays to rebuild identical state.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, replace

from .errors import Conflict, Invalid, NotFound
from .payloads import PayloadSchema

ROLES = ("admin", "user")


@dataclass(frozen=True)
class User:
    id: int
    name: str
    username: str
    password_hash: str
    role: str

    def public_json(self) -> dict:
        # password_hash deliberately omitted from every API body
        return {"id": self.id, "name": self.name, "username": self.username, "role": self.role}


@dataclass(frozen=True)
class Device:
    id: int
    owner_user_id: int
    name: str

    def public_json(self) -> dict:
        return {"id": self.id, "owner_user_id": self.owner_user_id, "name": self.name}


@dataclass(frozen=True)
class Sensor:
    id: int
    device_id: int
    name: str
    schema: PayloadSchema

    def public_json(self) -> dict:
        return {
            "id": self.id,
            "device_id": self.device_id,
            "name": self.name,
            "schema": self.schema.to_json(),
        }


@dataclass(frozen=True)
class Consumer:
    id: int
    owner_user_id: int
    name: str

    def public_json(self) -> dict:
        return {"id": self.id, "owner_user_id": self.owner_user_id, "name": self.name}


class EntityStore:
    """Thread-safe in-memory registry with optional append-only persistence.

    Every mutator takes the store lock, validates its references, applies
    the change, and (when a log path is configured) appends one JSON record
    before returning, so a crash mid-sequence loses at most the in-flight
    mutation.
    """

    def __init__(self, log_path: str | None = None, _replaying: bool = False):
        self._lock = threading.RLock()
        self.users: dict[int, User] = {}
        self.devices: dict[int, Device] = {}
        self.sensors: dict[int, Sensor] = {}
        self.consumers: dict[int, Consumer] = {}
        self.grants: set[tuple[int, int]] = set()  # (consumer_id, sensor_id)
        self._next_id = {"user": 1, "device": 1, "sensor": 1, "consumer": 1}
        self._log_path = log_path
        self._log_fh = None
        if log_path and not _replaying:
            os.makedirs(os.path.dirname(os.path.abspath(log_path)), exist_ok=True)
            self._log_fh = open(log_path, "a", encoding="utf-8")

    # -- persistence ------------------------------------------------------

    def _append(self, record: dict) -> None:
        if self._log_fh is not None:
            self._log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._log_fh.flush()

    def close(self) -> None:
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None

    @classmethod
    def load(cls, log_path: str) -> "EntityStore":
        """Rebuild a store by replaying its mutation log, then reattach it."""
        store = cls(log_path=log_path, _replaying=True)
        if os.path.exists(log_path):
            with open(log_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        store._apply(json.loads(line))
        os.makedirs(os.path.dirname(os.path.abspath(log_path)), exist_ok=True)
        store._log_fh = open(log_path, "a", encoding="utf-8")
        return store

    def _apply(self, rec: dict) -> None:
        op = rec["op"]
        if op == "add_user":
            self.add_user(rec["name"], rec["username"], rec["password_hash"], rec["role"])
        elif op == "add_device":
            self.add_device(rec["owner_user_id"], rec["name"])
        elif op == "add_sensor":
            self.add_sensor(rec["device_id"], rec["name"], PayloadSchema.from_json(rec["schema"]))
        elif op == "add_consumer":
            self.add_consumer(rec["owner_user_id"], rec["name"])
        elif op == "add_grant":
            self.add_grant(rec["consumer_id"], rec["sensor_id"])
        elif op == "rename":
            self.rename(rec["kind"], rec["id"], rec["name"])
        elif op == "delete":
            self.delete(rec["kind"], rec["id"])
        else:
            raise Invalid(f"unknown log record op {op!r}")

    # -- creates ----------------------------------------------------------

    def _issue_id(self, kind: str) -> int:
        n = self._next_id[kind]
        self._next_id[kind] = n + 1
        return n

    def add_user(self, name: str, username: str, password_hash: str, role: str) -> User:
        if not username or not password_hash:
            raise Invalid("username and password are required")
        if role not in ROLES:
            raise Invalid(f"role must be one of {ROLES}")
        with self._lock:
            if any(u.username == username for u in self.users.values()):
                raise Conflict(f"username {username!r} already taken")
            user = User(self._issue_id("user"), name, username, password_hash, role)
            self.users[user.id] = user
            self._append({"op": "add_user", "name": name, "username": username,
                          "password_hash": password_hash, "role": role})
            return user

    def add_device(self, owner_user_id: int, name: str) -> Device:
        with self._lock:
            if owner_user_id not in self.users:
                raise NotFound(f"user {owner_user_id} not found")
            device = Device(self._issue_id("device"), owner_user_id, name)
            self.devices[device.id] = device
            self._append({"op": "add_device", "owner_user_id": owner_user_id, "name": name})
            return device

    def add_sensor(self, device_id: int, name: str, schema: PayloadSchema) -> Sensor:
        with self._lock:
            if device_id not in self.devices:
                raise NotFound(f"device {device_id} not found")
            sensor = Sensor(self._issue_id("sensor"), device_id, name, schema)
            self.sensors[sensor.id] = sensor
            self._append({"op": "add_sensor", "device_id": device_id, "name": name,
                          "schema": schema.to_json()})
            return sensor

    def add_consumer(self, owner_user_id: int, name: str) -> Consumer:
        with self._lock:
            if owner_user_id not in self.users:
                raise NotFound(f"user {owner_user_id} not found")
            consumer = Consumer(self._issue_id("consumer"), owner_user_id, name)
            self.consumers[consumer.id] = consumer
            self._append({"op": "add_consumer", "owner_user_id": owner_user_id, "name": name})
            return consumer

    def add_grant(self, consumer_id: int, sensor_id: int) -> bool:
        """Record a consumer->sensor grant. Returns False if it already existed."""
        with self._lock:
            if consumer_id not in self.consumers:
                raise NotFound(f"consumer {consumer_id} not found")
            if sensor_id not in self.sensors:
                raise NotFound(f"sensor {sensor_id} not found")
            key = (consumer_id, sensor_id)
            if key in self.grants:
                return False
            self.grants.add(key)
            self._append({"op": "add_grant", "consumer_id": consumer_id, "sensor_id": sensor_id})
            return True

    # -- update / delete --------------------------------------------------

    def rename(self, kind: str, entity_id: int, name: str):
        with self._lock:
            table = self._table(kind)
            if entity_id not in table:
                raise NotFound(f"{kind} {entity_id} not found")
            table[entity_id] = replace(table[entity_id], name=name)
            self._append({"op": "rename", "kind": kind, "id": entity_id, "name": name})
            return table[entity_id]

    def delete(self, kind: str, entity_id: int) -> None:
        """Delete an entity; rejected while anything still references it."""
        with self._lock:
            table = self._table(kind)
            if entity_id not in table:
                raise NotFound(f"{kind} {entity_id} not found")
            if kind == "user":
                if any(d.owner_user_id == entity_id for d in self.devices.values()):
                    raise Conflict("user still owns devices")
                if any(c.owner_user_id == entity_id for c in self.consumers.values()):
                    raise Conflict("user still owns consumers")
            elif kind == "device":
                if any(s.device_id == entity_id for s in self.sensors.values()):
                    raise Conflict("device still has sensors")
            elif kind == "sensor":
                if any(sid == entity_id for _, sid in self.grants):
                    raise Conflict("sensor still granted to consumers")
            elif kind == "consumer":
                self.grants = {(c, s) for (c, s) in self.grants if c != entity_id}
            del table[entity_id]
            self._append({"op": "delete", "kind": kind, "id": entity_id})

    def _table(self, kind: str) -> dict:
        try:
            return {"user": self.users, "device": self.devices,
                    "sensor": self.sensors, "consumer": self.consumers}[kind]
        except KeyError:
            raise Invalid(f"unknown entity kind {kind!r}") from None

    # -- queries ----------------------------------------------------------

    def user_by_username(self, username: str) -> User | None:
        with self._lock:
            for u in self.users.values():
                if u.username == username:
                    return u
            return None

    def get_user(self, user_id: int) -> User:
        u = self.users.get(user_id)
        if u is None:
            raise NotFound(f"user {user_id} not found")
        return u

    def get_device(self, device_id: int) -> Device:
        d = self.devices.get(device_id)
        if d is None:
            raise NotFound(f"device {device_id} not found")
        return d

    def get_sensor(self, sensor_id: int) -> Sensor:
        s = self.sensors.get(sensor_id)
        if s is None:
            raise NotFound(f"sensor {sensor_id} not found")
        return s

    def get_consumer(self, consumer_id: int) -> Consumer:
        c = self.consumers.get(consumer_id)
        if c is None:
            raise NotFound(f"consumer {consumer_id} not found")
        return c

    def devices_of(self, user_id: int) -> list[Device]:
        with self._lock:
            return sorted((d for d in self.devices.values() if d.owner_user_id == user_id),
                          key=lambda d: d.id)

    def sensors_of(self, device_id: int) -> list[Sensor]:
        with self._lock:
            return sorted((s for s in self.sensors.values() if s.device_id == device_id),
                          key=lambda s: s.id)

    def consumers_of(self, user_id: int) -> list[Consumer]:
        with self._lock:
            return sorted((c for c in self.consumers.values() if c.owner_user_id == user_id),
                          key=lambda c: c.id)

    def has_grant(self, consumer_id: int, sensor_id: int) -> bool:
        return (consumer_id, sensor_id) in self.grants

    def list_users(self) -> list[User]:
        with self._lock:
            return sorted(self.users.values(), key=lambda u: u.id)

    # -- integrity --------------------------------------------------------

    def check_referential_integrity(self) -> list[str]:
        """Full-store scan; returns human-readable violations (empty = clean)."""
        problems = []
        with self._lock:
            for d in self.devices.values():
                if d.owner_user_id not in self.users:
                    problems.append(f"device {d.id} references missing user {d.owner_user_id}")
            for s in self.sensors.values():
                if s.device_id not in self.devices:
                    problems.append(f"sensor {s.id} references missing device {s.device_id}")
            for c in self.consumers.values():
                if c.owner_user_id not in self.users:
                    problems.append(f"consumer {c.id} references missing user {c.owner_user_id}")
            for cid, sid in self.grants:
                if cid not in self.consumers:
                    problems.append(f"grant references missing consumer {cid}")
                if sid not in self.sensors:
                    problems.append(f"grant references missing sensor {sid}")
        return problems

    def entity_snapshot(self) -> dict:
        """Comparable snapshot of all entity state (used by round-trip tests)."""
        with self._lock:
            return {
                "users": {i: u for i, u in self.users.items()},
                "devices": dict(self.devices),
                "sensors": dict(self.sensors),
                "consumers": dict(self.consumers),
                "grants": set(self.grants),
                "next_id": dict(self._next_id),
            }
