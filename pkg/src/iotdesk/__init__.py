"""Desk-scale IoT platform with swappable deployment runtimes.

The package bundles four pieces that are usually separate systems: the
platform itself (entity registry, token auth, ingest pipeline, HTTP/JSON
endpoints), a runtime layer that executes the endpoint handlers either as a
routed monolith or as serverless-style function pools, a virtual-user load
harness, and a cost estimator for reservation-based versus pay-per-use
deployments.
"""

__version__ = "0.1.0"
