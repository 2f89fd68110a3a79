"""Per-sensor ingest pipeline: topic log -> sink connector -> queryable index.

In-process stand-in for a streaming platform, its sink connectors, and a
search index. Each sensor owns one append-only topic, one index, and one
connector whose cursor trails the topic. Readings become queryable only
after the connector drains them, so reads are eventually consistent unless
a synchronous drain is requested.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field

from .errors import Conflict, NotFound
from .payloads import PayloadSchema, SchemaMismatch, validate_payload

DEFAULT_BATCH_SIZE = 500
DEFAULT_QUERY_LIMIT = 100
DEFAULT_DRAIN_INTERVAL_MS = 100.0


@dataclass(frozen=True)
class SensorReading:
    sensor_id: int
    timestamp_ms: int
    payload: object

    def to_json(self) -> dict:
        return {"sensor_id": self.sensor_id, "timestamp": self.timestamp_ms,
                "payload": self.payload}


@dataclass
class TopicLog:
    sensor_id: int
    records: list[SensorReading] = field(default_factory=list)

    @property
    def next_offset(self) -> int:
        return len(self.records)


@dataclass
class SensorIndex:
    sensor_id: int
    documents: dict[int, SensorReading] = field(default_factory=dict)  # offset -> reading
    high_watermark: int = -1  # last sunk offset; -1 when empty


@dataclass
class SinkConnector:
    sensor_id: int
    cursor: int = 0  # next offset to sink == index.high_watermark + 1
    batch_size: int = DEFAULT_BATCH_SIZE


class _Stream:
    __slots__ = ("topic", "index", "connector", "schema", "lock")

    def __init__(self, sensor_id: int, schema: PayloadSchema, batch_size: int):
        self.topic = TopicLog(sensor_id)
        self.index = SensorIndex(sensor_id)
        self.connector = SinkConnector(sensor_id, batch_size=batch_size)
        self.schema = schema
        self.lock = threading.RLock()


class StreamRegistry:
    """All provisioned per-sensor streams plus the drain machinery.

    Appends to one topic are serialized under the stream lock; different
    sensors never contend. Drains apply whole batches under the lock so a
    concurrent reader never sees a partially applied batch.
    """

    def __init__(self, batch_size: int = DEFAULT_BATCH_SIZE,
                 query_limit: int = DEFAULT_QUERY_LIMIT,
                 dump_dir: str | None = None):
        self._streams: dict[int, _Stream] = {}
        self._registry_lock = threading.RLock()
        self.batch_size = batch_size
        self.query_limit = query_limit
        self.dump_dir = dump_dir
        if dump_dir:
            os.makedirs(dump_dir, exist_ok=True)

    def _stream(self, sensor_id: int) -> _Stream:
        s = self._streams.get(sensor_id)
        if s is None:
            raise NotFound(f"no stream provisioned for sensor {sensor_id}")
        return s

    # -- operations -------------------------------------------------------

    def provision_stream(self, sensor_id: int, schema: PayloadSchema) -> None:
        with self._registry_lock:
            if sensor_id in self._streams:
                raise Conflict(f"stream for sensor {sensor_id} already provisioned")
            self._streams[sensor_id] = _Stream(sensor_id, schema, self.batch_size)

    def is_provisioned(self, sensor_id: int) -> bool:
        return sensor_id in self._streams

    def schema_of(self, sensor_id: int) -> PayloadSchema:
        return self._stream(sensor_id).schema

    def validate(self, sensor_id: int, payload) -> SchemaMismatch | None:
        return validate_payload(self._stream(sensor_id).schema, payload)

    def publish(self, sensor_id: int, reading: SensorReading) -> int:
        """Append a (pre-validated) reading; returns its offset."""
        stream = self._stream(sensor_id)
        with stream.lock:
            offset = stream.topic.next_offset
            stream.topic.records.append(reading)
        if self.dump_dir:
            self._dump(sensor_id, reading)
        return offset

    def drain(self, sensor_id: int, max_batches: int | None = None) -> int:
        """Copy pending topic records into the index; returns how many sunk."""
        stream = self._stream(sensor_id)
        sunk = 0
        batches = 0
        while max_batches is None or batches < max_batches:
            with stream.lock:
                start = stream.connector.cursor
                end = min(start + stream.connector.batch_size, stream.topic.next_offset)
                if end <= start:
                    break
                for offset in range(start, end):
                    stream.index.documents[offset] = stream.topic.records[offset]
                stream.index.high_watermark = end - 1
                stream.connector.cursor = end
                sunk += end - start
            batches += 1
        return sunk

    def drain_all(self, max_batches: int | None = None) -> int:
        with self._registry_lock:
            sensor_ids = list(self._streams)
        return sum(self.drain(sid, max_batches) for sid in sensor_ids)

    def query(self, sensor_id: int, limit: int | None = None) -> list[SensorReading]:
        """Sunk readings, newest first, truncated to limit."""
        stream = self._stream(sensor_id)
        n = self.query_limit if limit is None else limit
        with stream.lock:
            top = stream.index.high_watermark
            if top < 0 or n <= 0:
                return []
            lowest = max(0, top - n + 1)
            return [stream.index.documents[o] for o in range(top, lowest - 1, -1)]

    # -- debugging dump ---------------------------------------------------

    def _dump(self, sensor_id: int, reading: SensorReading) -> None:
        path = os.path.join(self.dump_dir, f"{sensor_id}.log")
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(reading.to_json(), sort_keys=True) + "\n")

    # -- introspection (tests, status endpoints) --------------------------

    def stream_state(self, sensor_id: int) -> dict:
        stream = self._stream(sensor_id)
        with stream.lock:
            return {
                "topic_next_offset": stream.topic.next_offset,
                "index_size": len(stream.index.documents),
                "high_watermark": stream.index.high_watermark,
                "cursor": stream.connector.cursor,
            }


class DrainPump:
    """Periodic drain driver for all provisioned streams.

    `run_pending(now_ms)` performs every drain whose interval boundary has
    passed, so a simulated clock can drive it deterministically; `start`
    runs the same logic on a daemon thread against the wall clock.
    """

    def __init__(self, registry: StreamRegistry,
                 interval_ms: float = DEFAULT_DRAIN_INTERVAL_MS):
        self.registry = registry
        self.interval_ms = interval_ms
        self._next_due_ms: float | None = None
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()

    def run_pending(self, now_ms: float) -> int:
        if self._next_due_ms is None:
            self._next_due_ms = now_ms + self.interval_ms
            return 0
        sunk = 0
        while now_ms >= self._next_due_ms:
            sunk += self.registry.drain_all()
            self._next_due_ms += self.interval_ms
        return sunk

    def start(self) -> None:
        if self._thread is not None:
            return
        self._stop.clear()

        def loop():
            while not self._stop.wait(self.interval_ms / 1000.0):
                self.registry.drain_all()

        self._thread = threading.Thread(target=loop, name="drain-pump", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        if self._thread is not None:
            self._stop.set()
            self._thread.join()
            self._thread = None
