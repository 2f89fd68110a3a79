"""Topic log -> sink connector -> index behavior."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iotdesk.errors import Conflict, NotFound
from iotdesk.payloads import PayloadSchema
from iotdesk.pipeline import DrainPump, SensorReading, StreamRegistry

SCALAR = PayloadSchema("float")


def reading(sensor_id, i):
    return SensorReading(sensor_id, timestamp_ms=1_000 + i, payload=float(i))


def test_publish_assigns_sequential_offsets():
    reg = StreamRegistry()
    reg.provision_stream(1, SCALAR)
    offsets = [reg.publish(1, reading(1, i)) for i in range(5)]
    assert offsets == [0, 1, 2, 3, 4]
    assert reg.stream_state(1)["topic_next_offset"] == 5


def test_readings_invisible_until_drained():
    reg = StreamRegistry()
    reg.provision_stream(1, SCALAR)
    reg.publish(1, reading(1, 0))
    assert reg.query(1) == []
    assert reg.drain(1) == 1
    assert [r.payload for r in reg.query(1)] == [0.0]


def test_query_returns_newest_first_with_limit():
    reg = StreamRegistry()
    reg.provision_stream(1, SCALAR)
    for i in range(10):
        reg.publish(1, reading(1, i))
    reg.drain(1)
    assert [r.payload for r in reg.query(1, limit=3)] == [9.0, 8.0, 7.0]
    assert [r.payload for r in reg.query(1)] == [float(i) for i in range(9, -1, -1)]
    assert reg.query(1, limit=0) == []


def test_default_query_limit_truncates():
    reg = StreamRegistry(query_limit=4)
    reg.provision_stream(1, SCALAR)
    for i in range(6):
        reg.publish(1, reading(1, i))
    reg.drain(1)
    assert len(reg.query(1)) == 4


def test_drain_respects_batch_size_and_max_batches():
    reg = StreamRegistry(batch_size=3)
    reg.provision_stream(1, SCALAR)
    for i in range(8):
        reg.publish(1, reading(1, i))
    assert reg.drain(1, max_batches=1) == 3
    assert reg.stream_state(1) == {
        "topic_next_offset": 8, "index_size": 3, "high_watermark": 2, "cursor": 3,
    }
    assert reg.drain(1, max_batches=1) == 3
    assert reg.drain(1) == 2  # remainder, then nothing left
    assert reg.drain(1) == 0


def test_double_provision_conflicts_and_missing_stream_not_found():
    reg = StreamRegistry()
    reg.provision_stream(1, SCALAR)
    with pytest.raises(Conflict):
        reg.provision_stream(1, SCALAR)
    with pytest.raises(NotFound):
        reg.publish(2, reading(2, 0))
    with pytest.raises(NotFound):
        reg.drain(2)
    with pytest.raises(NotFound):
        reg.query(2)
    assert reg.is_provisioned(1) and not reg.is_provisioned(2)


def test_streams_are_isolated_per_sensor():
    reg = StreamRegistry()
    reg.provision_stream(1, SCALAR)
    reg.provision_stream(2, SCALAR)
    reg.publish(1, reading(1, 0))
    reg.publish(2, reading(2, 100))
    reg.drain_all()
    assert [r.payload for r in reg.query(1)] == [0.0]
    assert [r.payload for r in reg.query(2)] == [100.0]


def test_validate_uses_provisioned_schema():
    reg = StreamRegistry()
    reg.provision_stream(1, PayloadSchema("tuple", ("float", "integer")))
    assert reg.validate(1, [1.5, 2]) is None
    mismatch = reg.validate(1, [1.5, "two"])
    assert mismatch is not None and mismatch.position == (1,)


def test_dump_dir_records_published_readings(tmp_path):
    reg = StreamRegistry(dump_dir=str(tmp_path / "dump"))
    reg.provision_stream(7, SCALAR)
    reg.publish(7, reading(7, 0))
    reg.publish(7, reading(7, 1))
    lines = (tmp_path / "dump" / "7.log").read_text().splitlines()
    assert [json.loads(l)["payload"] for l in lines] == [0.0, 1.0]


@settings(max_examples=60, deadline=None)
@given(
    plan=st.lists(
        st.tuples(st.integers(min_value=1, max_value=4),  # sensor
                  st.sampled_from(["publish", "drain"])),
        max_size=120,
    ),
    batch_size=st.integers(min_value=1, max_value=7),
)
def test_drain_conserves_and_orders_readings(plan, batch_size):
    """After a final full drain, every index equals its topic, in order."""
    reg = StreamRegistry(batch_size=batch_size, query_limit=10**6)
    counters = {sid: 0 for sid in range(1, 5)}
    for sid in counters:
        reg.provision_stream(sid, SCALAR)
    for sid, op in plan:
        if op == "publish":
            reg.publish(sid, reading(sid, counters[sid]))
            counters[sid] += 1
        else:
            reg.drain(sid, max_batches=1)
    reg.drain_all()
    for sid, published in counters.items():
        state = reg.stream_state(sid)
        assert state["index_size"] == state["topic_next_offset"] == published
        assert state["cursor"] == published
        assert state["high_watermark"] == published - 1
        newest_first = [r.payload for r in reg.query(sid)]
        assert newest_first == [float(i) for i in range(published - 1, -1, -1)]


# -- drain pump ------------------------------------------------------------


def test_run_pending_fires_on_interval_boundaries():
    reg = StreamRegistry()
    reg.provision_stream(1, SCALAR)
    pump = DrainPump(reg, interval_ms=100.0)
    assert pump.run_pending(0.0) == 0  # arms the schedule
    reg.publish(1, reading(1, 0))
    assert pump.run_pending(99.0) == 0  # before first boundary
    assert pump.run_pending(100.0) == 1
    reg.publish(1, reading(1, 1))
    reg.publish(1, reading(1, 2))
    # jumping several boundaries drains everything that is pending
    assert pump.run_pending(501.0) == 2
    assert pump.run_pending(501.0) == 0


def test_run_pending_catches_up_after_long_gap():
    reg = StreamRegistry()
    reg.provision_stream(1, SCALAR)
    pump = DrainPump(reg, interval_ms=100.0)
    pump.run_pending(0.0)
    reg.publish(1, reading(1, 0))
    pump.run_pending(10_000.0)
    # schedule advanced past now: the very next boundary is in the future
    assert pump.run_pending(10_050.0) == 0
    reg.publish(1, reading(1, 1))
    assert pump.run_pending(10_100.0) == 1


def test_pump_background_thread_drains(monkeypatch):
    reg = StreamRegistry()
    reg.provision_stream(1, SCALAR)
    pump = DrainPump(reg, interval_ms=5.0)
    pump.start()
    try:
        reg.publish(1, reading(1, 0))
        import time

        deadline = time.time() + 2.0
        while time.time() < deadline and not reg.query(1):
            time.sleep(0.01)
        assert [r.payload for r in reg.query(1)] == [0.0]
    finally:
        pump.stop()
    # stop() is idempotent and start() can rearm
    pump.stop()
