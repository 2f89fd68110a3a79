"""Suite-wide test configuration."""

from hypothesis import HealthCheck, settings

# CI boxes here are slow enough that first-draw warm-up can exceed the
# default per-example deadline and the generation-speed health check.
settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")
