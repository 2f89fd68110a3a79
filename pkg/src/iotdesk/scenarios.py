"""Virtual-user ramp scenarios.

Each scenario is a piecewise-linear schedule of target VU counts over a
30-minute window: `linear` ramps steadily to 100 VUs, `random` wanders
through preset plateaus, and `spike` holds a low baseline with a sharp
1-minute burst to 100. Affine time/VU scaling shrinks a schedule for desk
runs while preserving its shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class OutOfRange(ValueError):
    """Raised when a time outside [0, duration] is queried."""


# Canonical stage tables in seconds: (end_time_s, target_vus), linearly
# interpolated between consecutive points.
STAGE_TABLES: dict[str, tuple[tuple[float, float], ...]] = {
    "linear": ((0.0, 0.0), (1800.0, 100.0)),
    "random": ((0.0, 0.0), (420.0, 60.0), (840.0, 30.0), (1260.0, 100.0),
               (1680.0, 40.0), (1800.0, 0.0)),
    "spike": ((0.0, 0.0), (60.0, 10.0), (840.0, 10.0), (900.0, 100.0),
              (960.0, 10.0), (1740.0, 10.0), (1800.0, 0.0)),
}

SCENARIO_NAMES = tuple(STAGE_TABLES)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    stages: tuple[tuple[float, float], ...]
    time_scale: float = 1.0
    vu_scale: float = 1.0

    def __post_init__(self):
        if len(self.stages) < 2:
            raise ValueError("a scenario needs at least two stage points")
        times = [t for t, _ in self.stages]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("stage times must be strictly increasing")
        if any(v < 0 for _, v in self.stages):
            raise ValueError("stage targets must not be negative")
        if self.time_scale <= 0 or self.vu_scale <= 0:
            raise ValueError("scales must be positive")

    @property
    def duration_s(self) -> float:
        return self.stages[-1][0]

    @classmethod
    def named(cls, name: str, time_scale: float = 1.0,
              vu_scale: float = 1.0) -> "ScenarioSpec":
        """Build a canonical scenario, optionally scaled: stage times are
        multiplied by time_scale and targets by vu_scale."""
        try:
            table = STAGE_TABLES[name]
        except KeyError:
            raise ValueError(f"unknown scenario {name!r}; expected one of "
                             f"{', '.join(SCENARIO_NAMES)}") from None
        stages = tuple((t * time_scale, v * vu_scale) for t, v in table)
        return cls(name=name, stages=stages, time_scale=time_scale,
                   vu_scale=vu_scale)


def vu_at_exact(spec: ScenarioSpec, t_s: float) -> float:
    """Interpolated VU target at time t, before integer rounding."""
    if t_s < 0 or t_s > spec.duration_s:
        raise OutOfRange(f"t={t_s} outside [0, {spec.duration_s}]")
    stages = spec.stages
    if t_s <= stages[0][0]:
        return stages[0][1]
    for (t0, v0), (t1, v1) in zip(stages, stages[1:]):
        if t_s <= t1:
            return v0 + (v1 - v0) * (t_s - t0) / (t1 - t0)
    return stages[-1][1]


def vu_at(spec: ScenarioSpec, t_s: float) -> int:
    """Target VU count at time t: linear interpolation between stages,
    rounded to the nearest integer (half away from zero)."""
    exact = vu_at_exact(spec, t_s)
    return int(math.floor(exact + 0.5))
