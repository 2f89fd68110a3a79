"""Deployment cost model: reserved clusters versus pay-per-use functions.

Reservation pricing charges for nodes, a cluster management fee, and
persistent disk for the whole run, independent of traffic. Pay-per-use
pricing charges per invocation plus vCPU-seconds and GiB-seconds of billed
instance time, where each request bills in 100 ms granules and an instance
slot is shared by up to `billed_concurrency` concurrent requests. All unit
prices live in a TOML pricing book, never in code.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from importlib import resources

from .errors import Invalid
from .runtime import BILLING_GRANULARITY_MS, billed_ms

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

HOURS_PER_MONTH = 730.0
CENTS_PER_USD = 100.0


def _require_non_negative(obj, names) -> None:
    for name in names:
        if getattr(obj, name) < 0:
            raise Invalid(f"{name} must not be negative")


@dataclass(frozen=True)
class ClusterPricing:
    """Reservation-based pricing for a fixed cluster."""

    node_count: int
    vm_hour_usd: float
    cluster_fee_usd_per_hour: float
    disk_gib: float
    disk_usd_per_gib_month: float

    def __post_init__(self):
        _require_non_negative(self, ("node_count", "vm_hour_usd",
                                     "cluster_fee_usd_per_hour", "disk_gib",
                                     "disk_usd_per_gib_month"))


@dataclass(frozen=True)
class UsagePricing:
    """Pay-per-use pricing for a serverless container runtime."""

    usd_per_million_invocations: float
    usd_per_vcpu_second: float
    usd_per_gib_second: float
    vcpus_per_instance: float
    memory_gib: float
    billed_concurrency: float = 1.0

    def __post_init__(self):
        _require_non_negative(self, ("usd_per_million_invocations",
                                     "usd_per_vcpu_second", "usd_per_gib_second",
                                     "vcpus_per_instance", "memory_gib"))
        if self.billed_concurrency <= 0:
            raise Invalid("billed_concurrency must be positive")


@dataclass
class CostReport:
    kind: str  # "reservation" or "payperuse"
    label: str
    total_usd: float
    requests: int
    cents_per_1000: float
    breakdown: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "label": self.label,
            "total_usd": self.total_usd,
            "requests": self.requests,
            "cents_per_1000_requests": self.cents_per_1000,
            "breakdown": self.breakdown,
            "inputs": self.inputs,
        }


def reservation_cost(pricing: ClusterPricing, duration_h: float) -> dict:
    """Reserved-cluster cost for a run: nodes + management fee + disk,
    each prorated to the run duration. Returns a component breakdown."""
    if duration_h <= 0:
        raise Invalid("duration_h must be positive")
    nodes = pricing.node_count * pricing.vm_hour_usd * duration_h
    fee = pricing.cluster_fee_usd_per_hour * duration_h
    disk = (pricing.disk_gib * pricing.disk_usd_per_gib_month
            * duration_h / HOURS_PER_MONTH)
    return {"nodes_usd": nodes, "cluster_fee_usd": fee, "disk_usd": disk,
            "total_usd": nodes + fee + disk}


def billed_seconds_from_average(invocations: int, average_ms: float,
                                billed_concurrency: float) -> float:
    """Billable instance seconds when only a mean request duration is known:
    each request bills in rounded-up granules and shares its instance slot
    with up to `billed_concurrency` concurrent requests."""
    if invocations < 0:
        raise Invalid("invocations must not be negative")
    per_request_ms = billed_ms(average_ms)
    return invocations * per_request_ms / 1000.0 / billed_concurrency


def billed_seconds_from_total(billed_ms_total: float,
                              billed_concurrency: float) -> float:
    """Billable instance seconds from an exact per-request billed-ms sum."""
    return billed_ms_total / 1000.0 / billed_concurrency


def payperuse_cost(pricing: UsagePricing, invocations: int,
                   billed_seconds_total: float) -> dict:
    """Pay-per-use cost: invocation fee plus vCPU and memory time."""
    if invocations < 0 or billed_seconds_total < 0:
        raise Invalid("counts must not be negative")
    invocation = invocations / 1e6 * pricing.usd_per_million_invocations
    cpu = billed_seconds_total * pricing.vcpus_per_instance * pricing.usd_per_vcpu_second
    memory = billed_seconds_total * pricing.memory_gib * pricing.usd_per_gib_second
    return {"invocations_usd": invocation, "cpu_usd": cpu, "memory_usd": memory,
            "total_usd": invocation + cpu + memory}


def cost_per_1000(total_usd: float, requests: int) -> float:
    """USD cents per 1000 served requests."""
    if requests <= 0:
        raise Invalid("cannot compute cost per 1000 requests with zero requests")
    return total_usd * CENTS_PER_USD * 1000.0 / requests


def payperuse_per_request_usd(pricing: UsagePricing,
                              billed_request_ms: float = BILLING_GRANULARITY_MS) -> float:
    """Marginal pay-per-use cost of one request."""
    seconds = billed_ms(billed_request_ms) / 1000.0 / pricing.billed_concurrency
    return (pricing.usd_per_million_invocations / 1e6
            + seconds * (pricing.vcpus_per_instance * pricing.usd_per_vcpu_second
                         + pricing.memory_gib * pricing.usd_per_gib_second))


def break_even_requests(reservation_total_usd: float, pricing: UsagePricing,
                        billed_request_ms: float = BILLING_GRANULARITY_MS) -> int:
    """Smallest request count at which the reserved cluster's cost per 1000
    requests drops to the pay-per-use cost per 1000 requests."""
    per_request = payperuse_per_request_usd(pricing, billed_request_ms)
    if per_request <= 0:
        raise Invalid("pay-per-use pricing must have a positive per-request cost")
    return math.ceil(reservation_total_usd / per_request)


def reservation_report(label: str, pricing: ClusterPricing, duration_h: float,
                       requests: int) -> CostReport:
    breakdown = reservation_cost(pricing, duration_h)
    return CostReport(
        kind="reservation", label=label, total_usd=breakdown["total_usd"],
        requests=requests,
        cents_per_1000=cost_per_1000(breakdown["total_usd"], requests),
        breakdown=breakdown,
        inputs={"duration_h": duration_h, "requests": requests})


def payperuse_report(label: str, pricing: UsagePricing, requests: int,
                     *, average_ms: float | None = None,
                     billed_ms_total: float | None = None) -> CostReport:
    if billed_ms_total is not None:
        seconds = billed_seconds_from_total(billed_ms_total, pricing.billed_concurrency)
    elif average_ms is not None:
        seconds = billed_seconds_from_average(requests, average_ms,
                                              pricing.billed_concurrency)
    else:
        raise Invalid("need average_ms or billed_ms_total")
    breakdown = payperuse_cost(pricing, requests, seconds)
    return CostReport(
        kind="payperuse", label=label, total_usd=breakdown["total_usd"],
        requests=requests,
        cents_per_1000=cost_per_1000(breakdown["total_usd"], requests),
        breakdown=breakdown,
        inputs={"requests": requests, "average_ms": average_ms,
                "billed_ms_total": billed_ms_total,
                "billed_seconds_total": seconds})


@dataclass
class PricingBook:
    clusters: dict[str, ClusterPricing]
    usage: dict[str, UsagePricing]

    def cluster(self, name: str) -> ClusterPricing:
        try:
            return self.clusters[name]
        except KeyError:
            raise Invalid(f"unknown cluster pricing profile {name!r}; have "
                          f"{sorted(self.clusters)}") from None

    def usage_profile(self, name: str) -> UsagePricing:
        try:
            return self.usage[name]
        except KeyError:
            raise Invalid(f"unknown usage pricing profile {name!r}; have "
                          f"{sorted(self.usage)}") from None


def _parse_pricing(raw: dict) -> PricingBook:
    clusters = {}
    for name, body in raw.get("cluster", {}).items():
        try:
            clusters[name] = ClusterPricing(**body)
        except TypeError as exc:
            raise Invalid(f"bad cluster profile {name!r}: {exc}") from None
    usage = {}
    for name, body in raw.get("usage", {}).items():
        try:
            usage[name] = UsagePricing(**body)
        except TypeError as exc:
            raise Invalid(f"bad usage profile {name!r}: {exc}") from None
    return PricingBook(clusters=clusters, usage=usage)


def load_pricing(path: str | None = None) -> PricingBook:
    """Load a pricing book from `path`, or the packaged default profiles."""
    if path is None:
        source = resources.files("iotdesk.data").joinpath("pricing.toml")
        with source.open("rb") as fh:
            return _parse_pricing(tomllib.load(fh))
    try:
        with open(path, "rb") as fh:
            return _parse_pricing(tomllib.load(fh))
    except FileNotFoundError:
        raise Invalid(f"pricing file {path!r} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise Invalid(f"pricing file {path!r} is not valid TOML: {exc}") from None
