"""Percentile math, bucketing, and report serialization."""

import statistics

import pytest
from hypothesis import given
from hypothesis import strategies as st

from iotdesk.metrics import (
    CSV_HEADER,
    Bucket,
    EmptySamples,
    MetricsReport,
    RequestRecord,
    bucketize,
    manifest_hash,
    percentile,
)


# -- percentile --------------------------------------------------------------


def test_percentile_examples():
    assert percentile(range(1, 101), 0.95) == pytest.approx(95.05)
    assert percentile([10.0, 20.0], 0.5) == pytest.approx(15.0)
    assert percentile([10.0, 20.0], 1.0) == pytest.approx(20.0)
    assert percentile([7.5], 0.95) == 7.5
    assert percentile([3, 1, 2], 0.5) == 2  # input order irrelevant


def test_percentile_rejects_bad_inputs():
    with pytest.raises(EmptySamples):
        percentile([], 0.95)
    with pytest.raises(ValueError):
        percentile([1.0], 0.0)
    with pytest.raises(ValueError):
        percentile([1.0], 1.5)


@given(st.lists(st.floats(min_value=0.0, max_value=1e6), min_size=2, max_size=200),
       st.integers(min_value=1, max_value=99))
def test_percentile_matches_inclusive_quantiles(samples, k):
    """Cross-check against the stdlib's inclusive-method quantiles."""
    grid = statistics.quantiles(samples, n=100, method="inclusive")
    assert percentile(samples, k / 100) == pytest.approx(grid[k - 1], rel=1e-9, abs=1e-9)
    assert min(samples) <= percentile(samples, k / 100) <= max(samples)


@given(st.lists(st.floats(min_value=0.0, max_value=1e6), min_size=1, max_size=200))
def test_percentile_is_monotonic_in_q(samples):
    values = [percentile(samples, q) for q in (0.1, 0.5, 0.9, 0.95, 1.0)]
    assert values == sorted(values)
    assert values[-1] == max(samples)


# -- bucketize ---------------------------------------------------------------


def record(start_s, latency_ms=10.0, status=200):
    return RequestRecord(start_ms=start_s * 1000.0, latency_ms=latency_ms, status=status)


def test_bucket_boundaries_use_floor_of_start_time():
    buckets = bucketize([record(9.9), record(10.0), record(10.1)], width_s=10.0)
    assert [b.requests for b in buckets] == [1, 2]
    assert [b.start_s for b in buckets] == [0.0, 10.0]


def test_bucketize_emits_empty_buckets_across_duration():
    buckets = bucketize([record(25.0)], width_s=10.0, duration_s=60.0)
    assert [b.start_s for b in buckets] == [0.0, 10.0, 20.0, 30.0, 40.0, 50.0]
    assert [b.requests for b in buckets] == [0, 0, 1, 0, 0, 0]
    empty = buckets[0]
    assert (empty.avg_ms, empty.p95_ms, empty.successes) == (0.0, 0.0, 0)


def test_bucketize_partition_sums_to_total():
    records = [record(i * 0.7, latency_ms=float(i), status=200 if i % 3 else 500)
               for i in range(100)]
    buckets = bucketize(records, width_s=10.0, duration_s=70.0)
    assert sum(b.requests for b in buckets) == 100
    assert sum(b.successes for b in buckets) == sum(1 for r in records if r.status == 200)


def test_bucket_stats_match_direct_computation():
    members = [record(1.0, 5.0), record(2.0, 15.0), record(3.0, 40.0, status=503)]
    bucket = bucketize(members, width_s=10.0)[0]
    assert bucket.requests == 3
    assert bucket.successes == 2
    assert bucket.avg_ms == pytest.approx(20.0)
    assert bucket.p95_ms == pytest.approx(percentile([5.0, 15.0, 40.0], 0.95))


def test_bucketize_empty_input():
    assert bucketize([], width_s=10.0) == []
    buckets = bucketize([], width_s=10.0, duration_s=30.0)
    assert len(buckets) == 3 and all(b.requests == 0 for b in buckets)


# -- manifest hash ------------------------------------------------------------


def test_manifest_hash_is_order_insensitive_and_value_sensitive():
    a = manifest_hash({"x": 1, "y": [1, 2]})
    b = manifest_hash({"y": [1, 2], "x": 1})
    c = manifest_hash({"x": 2, "y": [1, 2]})
    assert a == b
    assert a != c
    assert len(a) == 64 and all(ch in "0123456789abcdef" for ch in a)


# -- report -------------------------------------------------------------------


def make_report(records, **overrides):
    kwargs = dict(endpoint="devices-get", scenario="linear", mode="monolith",
                  seed=7, time_scale=0.1, vu_scale=0.2, duration_s=30.0,
                  manifest={"seed": 7, "scenario": "linear"})
    kwargs.update(overrides)
    return MetricsReport.from_records(records, **kwargs)


def test_report_aggregates_are_weighted_consistently():
    records = [record(t, latency_ms=10.0 + t) for t in (0.5, 5.0, 12.0, 25.0, 29.0)]
    report = make_report(records)
    assert report.total_requests == 5
    assert report.successes == 5
    # the global average equals the request-weighted mean of bucket averages
    weighted = sum(b.avg_ms * b.requests for b in report.buckets) / 5
    assert report.average_ms == pytest.approx(weighted, abs=1e-9)
    assert report.p95_ms == pytest.approx(percentile([10.5, 15.0, 22.0, 35.0, 39.0], 0.95))
    assert report.success_rate() == 1.0


def test_report_success_rate_counts_only_200s():
    records = [record(1.0), record(2.0, status=429), record(3.0, status=503)]
    report = make_report(records)
    assert report.successes == 1
    assert report.success_rate() == pytest.approx(1 / 3)
    empty = make_report([])
    assert empty.success_rate() == 1.0
    assert empty.average_ms == 0.0 and empty.p95_ms == 0.0


def test_csv_embeds_manifest_hash_and_formats_rows():
    report = make_report([record(0.5, 12.3456), record(15.0, 20.0)])
    text = report.csv_text()
    lines = text.splitlines()
    assert lines[0] == f"# manifest_hash={report.manifest_digest}"
    assert lines[1] == CSV_HEADER
    assert lines[2] == "0,1,1,12.346,12.346"
    assert len(lines) == 2 + 3  # 30s duration / 10s width
    assert text.endswith("\n")


def test_csv_and_json_are_deterministic():
    records = [record(0.5), record(15.0)]
    a, b = make_report(records), make_report(records)
    assert a.csv_text() == b.csv_text()
    assert a.json_text() == b.json_text()


def test_json_round_trip_carries_all_counters(tmp_path):
    import json

    report = make_report(
        [RequestRecord(500.0, 12.0, 200, cold_start=True), record(15.0)],
        invocations=4, billed_ms_total=400)
    csv_path, json_path = tmp_path / "run.csv", tmp_path / "run.json"
    report.write(csv_path, json_path)
    loaded = json.loads(json_path.read_text())
    assert loaded["total_requests"] == 2
    assert loaded["invocations"] == 4
    assert loaded["billed_ms_total"] == 400
    assert loaded["cold_starts"] == 1
    assert loaded["manifest_hash"] == report.manifest_digest
    assert loaded["incomplete"] is False
    assert len(loaded["buckets"]) == 3
    assert csv_path.read_text().startswith("# manifest_hash=")
