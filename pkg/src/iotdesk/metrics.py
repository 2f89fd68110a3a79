"""Latency metrics: percentile math, 10-second buckets, and run reports.

A load run produces one record per request; this module folds them into
per-bucket and aggregate statistics and serializes the result as CSV (for
plotting) and JSON (for the cost model). Serialization is deterministic so
an identical run manifest reproduces byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

DEFAULT_BUCKET_WIDTH_S = 10.0

CSV_HEADER = "bucket_start_s,requests,successes,avg_ms,p95_ms"


class EmptySamples(ValueError):
    """Raised when a percentile of an empty sample set is requested."""


def percentile(samples, q: float) -> float:
    """Closest-ranks percentile with linear interpolation.

    The value at sorted position (n−1)×q, interpolating between the two
    surrounding ranks when the position is fractional.
    """
    if not samples:
        raise EmptySamples("no samples")
    if not 0.0 < q <= 1.0:
        raise ValueError("q must be in (0, 1]")
    ordered = sorted(samples)
    position = (len(ordered) - 1) * q
    lower = math.floor(position)
    fraction = position - lower
    if lower + 1 < len(ordered):
        return ordered[lower] + fraction * (ordered[lower + 1] - ordered[lower])
    return ordered[lower]


@dataclass(frozen=True)
class RequestRecord:
    """One completed virtual-user request."""

    start_ms: float
    latency_ms: float
    status: int
    cold_start: bool = False


@dataclass(frozen=True)
class Bucket:
    start_s: float
    requests: int
    successes: int
    avg_ms: float
    p95_ms: float


def bucketize(records, width_s: float = DEFAULT_BUCKET_WIDTH_S,
              duration_s: float | None = None) -> list[Bucket]:
    """Group records into fixed-width buckets keyed by request start time.

    A record lands in bucket ⌊start/width⌋. When duration_s is given, the
    series covers the whole window, including empty buckets (reported with
    zero counts and 0.0 statistics).
    """
    groups: dict[int, list[RequestRecord]] = {}
    for record in records:
        index = int(record.start_ms / 1000.0 // width_s)
        groups.setdefault(index, []).append(record)
    last_index = max(groups) if groups else -1
    if duration_s is not None and duration_s > 0:
        last_index = max(last_index, math.ceil(duration_s / width_s) - 1)
    buckets = []
    for index in range(last_index + 1):
        members = groups.get(index, [])
        latencies = [r.latency_ms for r in members]
        buckets.append(Bucket(
            start_s=index * width_s,
            requests=len(members),
            successes=sum(1 for r in members if r.status == 200),
            avg_ms=(sum(latencies) / len(latencies)) if latencies else 0.0,
            p95_ms=percentile(latencies, 0.95) if latencies else 0.0,
        ))
    return buckets


def manifest_hash(manifest: dict) -> str:
    """SHA-256 over the canonical JSON encoding of a run manifest."""
    canonical = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class MetricsReport:
    endpoint: str
    scenario: str
    mode: str
    seed: int
    time_scale: float
    vu_scale: float
    duration_s: float
    total_requests: int
    successes: int
    average_ms: float
    p95_ms: float
    buckets: list[Bucket]
    invocations: int = 0
    billed_ms_total: int = 0
    cold_starts: int = 0
    incomplete: bool = False
    manifest: dict = field(default_factory=dict)

    @classmethod
    def from_records(cls, records, *, endpoint: str, scenario: str, mode: str,
                     seed: int, time_scale: float, vu_scale: float,
                     duration_s: float, width_s: float = DEFAULT_BUCKET_WIDTH_S,
                     invocations: int = 0, billed_ms_total: int = 0,
                     incomplete: bool = False,
                     manifest: dict | None = None) -> "MetricsReport":
        records = list(records)
        latencies = [r.latency_ms for r in records]
        return cls(
            endpoint=endpoint, scenario=scenario, mode=mode, seed=seed,
            time_scale=time_scale, vu_scale=vu_scale, duration_s=duration_s,
            total_requests=len(records),
            successes=sum(1 for r in records if r.status == 200),
            average_ms=(sum(latencies) / len(latencies)) if latencies else 0.0,
            p95_ms=percentile(latencies, 0.95) if latencies else 0.0,
            buckets=bucketize(records, width_s, duration_s),
            invocations=invocations,
            billed_ms_total=billed_ms_total,
            cold_starts=sum(1 for r in records if r.cold_start),
            incomplete=incomplete,
            manifest=dict(manifest or {}),
        )

    @property
    def manifest_digest(self) -> str:
        return manifest_hash(self.manifest)

    def success_rate(self) -> float:
        return self.successes / self.total_requests if self.total_requests else 1.0

    def csv_text(self) -> str:
        lines = [f"# manifest_hash={self.manifest_digest}", CSV_HEADER]
        for b in self.buckets:
            lines.append(f"{b.start_s:g},{b.requests},{b.successes},"
                         f"{b.avg_ms:.3f},{b.p95_ms:.3f}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "manifest_hash": self.manifest_digest,
            "manifest": self.manifest,
            "endpoint": self.endpoint,
            "scenario": self.scenario,
            "mode": self.mode,
            "seed": self.seed,
            "time_scale": self.time_scale,
            "vu_scale": self.vu_scale,
            "duration_s": self.duration_s,
            "total_requests": self.total_requests,
            "successes": self.successes,
            "success_rate": self.success_rate(),
            "average_ms": self.average_ms,
            "p95_ms": self.p95_ms,
            "invocations": self.invocations,
            "billed_ms_total": self.billed_ms_total,
            "cold_starts": self.cold_starts,
            "incomplete": self.incomplete,
            "buckets": [
                {"start_s": b.start_s, "requests": b.requests,
                 "successes": b.successes, "avg_ms": b.avg_ms, "p95_ms": b.p95_ms}
                for b in self.buckets
            ],
        }

    def json_text(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def write(self, csv_path, json_path) -> None:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(self.csv_text())
        with open(json_path, "w", encoding="utf-8") as fh:
            fh.write(self.json_text())
