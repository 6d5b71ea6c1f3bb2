"""Stimulus pattern algebra for the cold-sensation display.

A stimulus alternates a continuously running cold-air channel with an
intermittent radiant warm channel.  Three pattern kinds are supported:

- S1: alternating cooling/warming cycles that hold the mean skin
  temperature constant (the per-cycle swing integrates to zero),
- S2: an initial temperature drop followed by a balanced hold,
- S3: continuous cooling only.

Cycle quantities follow from three design inputs: the cooling rate
(negative), the fraction of each cycle spent cooling, and the per-cycle
temperature swing.  Schedule boundaries are carried as exact rationals
(derived from the decimal reading of the inputs) so that long schedules
accumulate no floating-point drift and whole cycles balance exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Union

from .errors import ValidationError, WrongKindError

KINDS = ("S1", "S2", "S3")

# Shortest stimulation cycle the actuators can alternate cleanly, seconds.
MIN_CYCLE_TIME = 0.5

# Default per-cycle skin temperature swing, degC.
DEFAULT_SWING = 0.06


@lru_cache(maxsize=4096)
def _decimal_fraction(x) -> Fraction:
    return Fraction(str(x))


def _exact(x: Union[float, int, Fraction]) -> Fraction:
    """Exact rational from the decimal reading of a number.

    Floats are interpreted through their shortest round-trip decimal
    representation, so 0.06 becomes 3/50 rather than the nearest binary
    fraction.  This keeps cycle boundaries like 0.6 s exact.
    """
    if isinstance(x, Fraction):
        return x
    return _decimal_fraction(x)


@dataclass(frozen=True)
class StimulusSpec:
    """One stimulus pattern request.

    cooling_rate is always negative (degC/s).  cooling_ratio (fraction of
    a cycle spent cooling) and swing (degC per half-cycle) apply to S1
    only; drop_duration (seconds of initial cooling) applies to S2 only.
    """

    kind: str
    cooling_rate: float
    cooling_ratio: Optional[float] = None
    swing: float = DEFAULT_SWING
    duration: float = 15.0
    drop_duration: float = 5.0


@dataclass(frozen=True)
class SpecIssue:
    severity: str  # "error" | "warning"
    message: str


def validate_spec(spec: StimulusSpec) -> list[SpecIssue]:
    """Check a stimulus spec against its invariants.

    Returns a list of issues; hard violations carry severity "error".
    A cycle shorter than MIN_CYCLE_TIME is reported as a warning only,
    since the actuators can still be driven, just less cleanly.
    """
    issues: list[SpecIssue] = []

    def err(msg):
        issues.append(SpecIssue("error", msg))

    if spec.kind not in KINDS:
        err(f"kind must be one of {KINDS}, got {spec.kind!r}")
        return issues
    if not spec.duration > 0:
        err("duration must be positive")
    if not spec.cooling_rate < 0:
        err("cooling_rate must be negative")
    if spec.kind == "S1":
        if spec.cooling_ratio is None or not 0 < spec.cooling_ratio < 1:
            err("cooling_ratio must lie in the open interval (0, 1)")
        if not spec.swing > 0:
            err("swing must be positive")
        if not issues:
            _, cycle, _, _ = _derive_exact(spec)
            if cycle < _exact(MIN_CYCLE_TIME):
                issues.append(SpecIssue(
                    "warning",
                    f"cycle time {float(cycle):.3f} s is below the "
                    f"{MIN_CYCLE_TIME} s actuation floor",
                ))
    elif spec.kind == "S2":
        if not spec.drop_duration > 0:
            err("drop_duration must be positive")
        elif spec.duration > 0 and not spec.drop_duration < spec.duration:
            err("drop_duration must be shorter than duration")
    return issues


def _require_valid(spec: StimulusSpec) -> None:
    errors = [i.message for i in validate_spec(spec) if i.severity == "error"]
    if errors:
        raise ValidationError("; ".join(errors))


def _derive_exact(spec: StimulusSpec):
    """Exact cycle quantities for an S1 spec.

    Returns (cooling_time, cycle_time, recovery_rate, warm_rate) as
    Fractions.  recovery_rate is the net rate during the warming part of
    the cycle; warm_rate is what the warm channel must supply on top of
    the still-running cold channel.
    """
    rate = _exact(spec.cooling_rate)
    ratio = _exact(spec.cooling_ratio)
    swing = _exact(spec.swing)
    cooling_time = swing / -rate
    cycle_time = cooling_time / ratio
    recovery_rate = swing / (cycle_time - cooling_time)
    warm_rate = recovery_rate - rate
    return cooling_time, cycle_time, recovery_rate, warm_rate


@dataclass(frozen=True)
class DerivedPattern:
    """Cycle quantities derived from an S1 stimulus spec."""

    cooling_time: float   # s spent cooling per cycle
    cycle_time: float     # s per full cycle
    recovery_rate: float  # degC/s net rate during the warming part
    warm_rate: float      # degC/s the warm channel must deliver


def derive_pattern(spec: StimulusSpec) -> DerivedPattern:
    """Derive the cycle quantities of an S1 stimulus.

    Raises WrongKindError for S2/S3 specs and ValidationError when the
    spec violates its invariants.
    """
    if spec.kind != "S1":
        raise WrongKindError(f"derive_pattern requires an S1 spec, got {spec.kind}")
    _require_valid(spec)
    cooling_time, cycle_time, recovery_rate, warm_rate = _derive_exact(spec)
    return DerivedPattern(
        cooling_time=float(cooling_time),
        cycle_time=float(cycle_time),
        recovery_rate=float(recovery_rate),
        warm_rate=float(warm_rate),
    )


@dataclass(frozen=True)
class Segment:
    """One piecewise-constant stretch of a rate schedule.

    Boundaries and rate are exact rationals; float views are provided
    for consumers that do arithmetic downstream.
    """

    start: Fraction
    end: Fraction
    rate: Fraction
    cold_active: bool
    warm_active: bool

    @property
    def start_s(self) -> float:
        return float(self.start)

    @property
    def end_s(self) -> float:
        return float(self.end)

    @property
    def rate_c_per_s(self) -> float:
        return float(self.rate)


@dataclass(frozen=True)
class RateSchedule:
    """Target skin-temperature-rate segments covering [0, duration]."""

    kind: str
    segments: tuple[Segment, ...]
    duration: Fraction
    base_cooling_rate: float = field(default=0.0)

    @property
    def duration_s(self) -> float:
        return float(self.duration)

    def rate_integral(self, start=None, end=None) -> Fraction:
        """Exact integral of the target rate over [start, end] (degC)."""
        t0 = Fraction(0) if start is None else _exact(start)
        t1 = self.duration if end is None else _exact(end)
        total = Fraction(0)
        for seg in self.segments:
            lo = max(seg.start, t0)
            hi = min(seg.end, t1)
            if hi > lo:
                total += seg.rate * (hi - lo)
        return total

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["start_s", "end_s", "rate_c_per_s",
                             "cold_active", "warm_active"])
            for seg in self.segments:
                writer.writerow([
                    seg.start_s, seg.end_s, seg.rate_c_per_s,
                    str(seg.cold_active).lower(), str(seg.warm_active).lower(),
                ])


def compile_schedule(spec: StimulusSpec) -> RateSchedule:
    """Compile a stimulus spec into a rate schedule over [0, duration].

    S1 alternates cooling and warming segments, starting with cooling and
    truncating the final partial cycle exactly at the requested duration.
    S2 is one cooling drop followed by a balanced hold at rate zero.
    S3 is a single cooling segment.  The cold channel is active on every
    segment; the warm channel is active exactly where the target rate
    sits above the cooling rate.
    """
    _require_valid(spec)
    duration = _exact(spec.duration)
    rate = _exact(spec.cooling_rate)
    segments: list[Segment] = []

    if spec.kind == "S1":
        cooling_time, cycle_time, recovery_rate, _ = _derive_exact(spec)
        cycle = 0
        pos = Fraction(0)
        while pos < duration:
            cool_end = min(pos + cooling_time, duration)
            segments.append(Segment(pos, cool_end, rate, True, False))
            if cool_end == duration:
                break
            # Boundaries come from whole-cycle multiples, never from
            # accumulating previous segment ends.
            warm_end = min((cycle + 1) * cycle_time, duration)
            segments.append(Segment(cool_end, warm_end, recovery_rate, True, True))
            cycle += 1
            pos = cycle * cycle_time
    elif spec.kind == "S2":
        drop_end = _exact(spec.drop_duration)
        segments.append(Segment(Fraction(0), drop_end, rate, True, False))
        segments.append(Segment(drop_end, duration, Fraction(0), True, True))
    else:  # S3
        segments.append(Segment(Fraction(0), duration, rate, True, False))

    return RateSchedule(
        kind=spec.kind,
        segments=tuple(segments),
        duration=duration,
        base_cooling_rate=float(rate),
    )
