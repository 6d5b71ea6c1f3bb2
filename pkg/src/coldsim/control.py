"""Duty models, calibration, and the control-loop runner.

Each actuator channel is modeled as an affine map from PWM duty ratio to
skin-temperature rate over a valid duty band.  Calibration measures
single-stimulus rates on a duty grid, fits both channels by least
squares, then verifies that full stimulus patterns leave the skin
temperature unchanged; a residual net drift is folded back into the warm
model and the verification repeats until the drift gate passes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from .errors import (CalibrationError, DegenerateDesignError,
                     UnreachableRateError, ValidationError)
from .pattern import RateSchedule, StimulusSpec, compile_schedule
from .plant import SkinPlant, Trace

VALVE_DUTY_RANGE = (0.490, 0.601)
LED_DUTY_RANGE = (0.118, 0.902)

# PWM carriers; the device datasheets do not pin these, they just need to
# beat the duty resolution the models care about.
VALVE_PWM_HZ = 100.0
LED_PWM_HZ = 1000.0


@dataclass(frozen=True)
class DutyModel:
    """Affine duty-to-rate model for one actuator channel."""

    channel: str          # "valve" | "led"
    slope: float          # degC/s per duty fraction
    intercept: float      # degC/s
    duty_min: float
    duty_max: float
    r_squared: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.duty_min < self.duty_max <= 1.0):
            raise ValidationError("duty range must satisfy 0 <= min < max <= 1")

    def predicted_rate(self, duty: float) -> float:
        return self.slope * duty + self.intercept

    def rate_range(self) -> tuple[float, float]:
        lo = self.predicted_rate(self.duty_min)
        hi = self.predicted_rate(self.duty_max)
        return (min(lo, hi), max(lo, hi))

    def to_dict(self) -> dict:
        return asdict(self)


def default_duty_range(channel: str) -> tuple[float, float]:
    if channel == "valve":
        return VALVE_DUTY_RANGE
    if channel == "led":
        return LED_DUTY_RANGE
    raise ValidationError(f"unknown channel {channel!r}")


def exact_models(params) -> tuple[DutyModel, DutyModel]:
    """Duty models copied from a plant's true coefficients (no fitting)."""
    valve = DutyModel("valve", params.valve_gain, params.valve_bias,
                      *VALVE_DUTY_RANGE, r_squared=1.0)
    led = DutyModel("led", params.led_gain, params.led_bias,
                    *LED_DUTY_RANGE, r_squared=1.0)
    return valve, led


@dataclass(frozen=True)
class CalibrationPoint:
    """One single-stimulus measurement: duty, temperature change, duration."""

    duty: float
    delta_temp: float   # degC over the measurement window
    delta_time: float = 6.0  # s

    @property
    def rate(self) -> float:
        return self.delta_temp / self.delta_time


def mean_rate(points: Sequence[CalibrationPoint]) -> float:
    """Average measured rate over repeats of one duty setting."""
    if not points:
        raise ValidationError("mean_rate needs at least one measurement")
    duty = points[0].duty
    delta_time = points[0].delta_time
    for p in points:
        if p.duty != duty or p.delta_time != delta_time:
            raise ValidationError("mean_rate expects a common duty and delta_time")
    return sum(p.rate for p in points) / len(points)


def fit_duty_model(points: Sequence[CalibrationPoint], channel: str,
                   duty_range: Optional[tuple[float, float]] = None) -> DutyModel:
    """Least-squares affine fit of rate against duty for one channel."""
    if len(points) < 2:
        raise ValidationError("fit_duty_model needs at least 2 points")
    duties = [p.duty for p in points]
    rates = [p.rate for p in points]
    if len(set(duties)) < 2:
        raise DegenerateDesignError("all duty values identical; cannot fit a line")
    n = len(points)
    mean_d = sum(duties) / n
    mean_v = sum(rates) / n
    sxx = sum((d - mean_d) ** 2 for d in duties)
    sxy = sum((d - mean_d) * (v - mean_v) for d, v in zip(duties, rates))
    slope = sxy / sxx
    intercept = mean_v - slope * mean_d
    ss_res = sum((v - (slope * d + intercept)) ** 2 for d, v in zip(duties, rates))
    ss_tot = sum((v - mean_v) ** 2 for v in rates)
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    lo, hi = duty_range if duty_range is not None else default_duty_range(channel)
    return DutyModel(channel, slope, intercept, lo, hi, r_squared)


def invert_duty(model: DutyModel, target_rate: float, tol: float = 1e-9) -> float:
    """Duty ratio that the model predicts will produce target_rate.

    Raises UnreachableRateError when the duty falls outside the model's
    valid band (beyond a small tolerance for boundary round-off).
    """
    if model.slope == 0.0:
        raise ValidationError("cannot invert a zero-slope duty model")
    duty = (target_rate - model.intercept) / model.slope
    if duty < model.duty_min - tol or duty > model.duty_max + tol:
        lo, hi = model.rate_range()
        raise UnreachableRateError(model.channel, target_rate, lo, hi)
    return min(max(duty, model.duty_min), model.duty_max)


def apply_drift_correction(points: Sequence[CalibrationPoint], net_drift: float,
                           duration: float) -> list[CalibrationPoint]:
    """Shift measured rates by the residual drift rate net_drift/duration.

    A pattern that should have been heat-balanced but left the skin
    net_drift warmer means the channel delivered that much extra rate;
    folding it into the measured rates and refitting cancels it.
    """
    if not duration > 0:
        raise ValidationError("duration must be positive")
    correction = net_drift / duration
    return [CalibrationPoint(p.duty, p.delta_temp + correction * p.delta_time,
                             p.delta_time)
            for p in points]


def default_verification_specs() -> tuple[StimulusSpec, ...]:
    """Alternating patterns used to check heat balance after fitting.

    A subset of the study grid, including one low cooling-ratio pattern
    whose long warm phase makes warm-channel bias visible.  The grid's
    most demanding warm rate is deliberately absent: the first fit sits
    slightly low (ambient pull absorbed during single-channel
    measurement counts twice when both channels run), and the
    drift-correction rounds must lift the warm model before that corner
    becomes commandable.
    """
    return (
        StimulusSpec("S1", cooling_rate=-0.16, cooling_ratio=0.5),
        StimulusSpec("S1", cooling_rate=-0.20, cooling_ratio=0.5),
        StimulusSpec("S1", cooling_rate=-0.20, cooling_ratio=0.3),
    )


@dataclass(frozen=True)
class CalibrationProtocol:
    """Measurement grids and gates for the calibration procedure."""

    valve_grid: tuple = (0.490, 0.514, 0.538, 0.561, 0.584, 0.601)
    led_grid: tuple = (0.118, 0.275, 0.431, 0.588, 0.745, 0.902)
    endpoint_repeats: int = 3      # lowest/highest duty measured this often
    measure_time: float = 6.0      # s per single-stimulus measurement
    settle_time: float = 0.0       # dead time after each re-initialization
    verify_specs: tuple = field(default_factory=default_verification_specs)
    drift_threshold: float = 0.1   # degC net change allowed per pattern
    max_iters: int = 10
    sensor_resolution: float = 0.025  # degC; 0 means an ideal sensor
    measurement_noise: float = 0.0    # degC/s sigma added to measured rates
    noise_seed: Optional[int] = None
    warm_only_correction: bool = True
    dt: float = 0.001


@dataclass(frozen=True)
class VerificationCheck:
    stimulus: str
    net_delta_t: float
    passed: bool


@dataclass
class CalibrationResult:
    valve: DutyModel
    led: DutyModel
    iterations: int
    verification: list[list[VerificationCheck]]
    protocol: CalibrationProtocol

    def to_json(self, path) -> None:
        doc = {
            "valve": self.valve.to_dict(),
            "led": self.led.to_dict(),
            "meta": {
                "iterations": self.iterations,
                "valve_grid": list(self.protocol.valve_grid),
                "led_grid": list(self.protocol.led_grid),
                "measure_time_s": self.protocol.measure_time,
                "drift_threshold_c": self.protocol.drift_threshold,
                "verification": [
                    [asdict(check) for check in round_]
                    for round_ in self.verification
                ],
            },
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_models(path) -> tuple[DutyModel, DutyModel]:
    with open(path) as fh:
        doc = json.load(fh)
    return DutyModel(**doc["valve"]), DutyModel(**doc["led"])


def _measure_channel(plant: SkinPlant, protocol: CalibrationProtocol,
                     grid: Sequence[float], channel: str,
                     rng: np.random.Generator) -> list[CalibrationPoint]:
    """Single-stimulus rate measurements over one duty grid.

    The skin is re-initialized before every measurement; the change is
    read through the (optionally quantized) sensor.  Endpoint duties are
    repeated to firm up the band limits.
    """
    n_steps = int(round(protocol.measure_time / protocol.dt))
    settle_steps = int(round(protocol.settle_time / protocol.dt))
    points = []
    for i, duty in enumerate(grid):
        repeats = protocol.endpoint_repeats if i in (0, len(grid) - 1) else 1
        for _ in range(repeats):
            plant.reset()
            if settle_steps:
                plant.run_span(dt=protocol.dt, n_steps=settle_steps)
            before = plant.read_sensor(protocol.sensor_resolution).value
            if channel == "valve":
                plant.run_span(duty_valve=duty, valve_on=True,
                               dt=protocol.dt, n_steps=n_steps)
            else:
                plant.run_span(duty_led=duty, led_on=True,
                               dt=protocol.dt, n_steps=n_steps)
            after = plant.read_sensor(protocol.sensor_resolution).value
            delta = after - before
            if protocol.measurement_noise > 0.0:
                delta += rng.normal(0.0, protocol.measurement_noise) * protocol.measure_time
            points.append(CalibrationPoint(duty, delta, protocol.measure_time))
    return points


def _mean_points(points: Sequence[CalibrationPoint]) -> list[CalibrationPoint]:
    """Collapse repeated measurements into one averaged point per duty."""
    by_duty: dict[float, list[CalibrationPoint]] = {}
    for p in points:
        by_duty.setdefault(p.duty, []).append(p)
    collapsed = []
    for duty, group in by_duty.items():
        rate = mean_rate(group)
        dt_meas = group[0].delta_time
        collapsed.append(CalibrationPoint(duty, rate * dt_meas, dt_meas))
    collapsed.sort(key=lambda p: p.duty)
    return collapsed


def calibrate(plant: SkinPlant,
              protocol: Optional[CalibrationProtocol] = None) -> CalibrationResult:
    """Run the full measurement-fit-verify-correct loop against a plant.

    Raises CalibrationError when the drift gate still fails after
    max_iters correction rounds; unreachable verification rates
    propagate as UnreachableRateError.
    """
    protocol = protocol if protocol is not None else CalibrationProtocol()
    if len({spec.duration for spec in protocol.verify_specs}) > 1:
        raise ValidationError("verification patterns must share one duration")
    rng = np.random.default_rng(protocol.noise_seed)

    raw_valve = _measure_channel(plant, protocol, protocol.valve_grid, "valve", rng)
    raw_led = _measure_channel(plant, protocol, protocol.led_grid, "led", rng)
    valve_points = _mean_points(raw_valve)
    led_points = _mean_points(raw_led)
    valve_model = fit_duty_model(valve_points, "valve",
                                 (protocol.valve_grid[0], protocol.valve_grid[-1]))
    led_model = fit_duty_model(led_points, "led",
                               (protocol.led_grid[0], protocol.led_grid[-1]))

    schedules = [compile_schedule(spec) for spec in protocol.verify_specs]
    history: list[list[VerificationCheck]] = []
    for iteration in range(1, protocol.max_iters + 1):
        checks = []
        nets = []
        for spec, schedule in zip(protocol.verify_specs, schedules):
            timeline = schedule_to_timeline(schedule, valve_model, led_model)
            plant.reset()
            before = plant.read_sensor(protocol.sensor_resolution).value
            run_control(timeline, plant, dt=protocol.dt)
            after = plant.read_sensor(protocol.sensor_resolution).value
            net = after - before
            nets.append(net)
            checks.append(VerificationCheck(
                _spec_label(spec), net, abs(net) <= protocol.drift_threshold))
        history.append(checks)
        if all(c.passed for c in checks):
            return CalibrationResult(valve_model, led_model, iteration,
                                     history, protocol)
        drift = sum(nets) / len(nets)
        duration = protocol.verify_specs[0].duration
        if protocol.warm_only_correction:
            led_points = apply_drift_correction(led_points, drift, duration)
        else:
            led_points = apply_drift_correction(led_points, drift / 2.0, duration)
            valve_points = apply_drift_correction(valve_points, drift / 2.0, duration)
            valve_model = fit_duty_model(
                valve_points, "valve",
                (protocol.valve_grid[0], protocol.valve_grid[-1]))
        led_model = fit_duty_model(led_points, "led",
                                   (protocol.led_grid[0], protocol.led_grid[-1]))

    raise CalibrationError(
        f"verification drift still above {protocol.drift_threshold} degC "
        f"after {protocol.max_iters} iterations", report=history)


def _spec_label(spec: StimulusSpec) -> str:
    if spec.kind == "S1":
        return f"S1_vc{spec.cooling_rate}_r{spec.cooling_ratio}"
    return f"{spec.kind}_vc{spec.cooling_rate}"


@dataclass(frozen=True)
class ChannelSpan:
    start: float
    end: float
    duty: float
    active: bool


@dataclass(frozen=True)
class ActuatorTimeline:
    """Per-channel duty spans covering [0, duration]."""

    valve: tuple[ChannelSpan, ...]
    led: tuple[ChannelSpan, ...]
    duration: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["channel", "start_s", "end_s", "duty", "active"])
            for channel, spans in (("valve", self.valve), ("led", self.led)):
                for span in spans:
                    writer.writerow([channel, span.start, span.end, span.duty,
                                     str(span.active).lower()])


def _merge_spans(spans: list[ChannelSpan]) -> tuple[ChannelSpan, ...]:
    merged: list[ChannelSpan] = []
    for span in spans:
        if merged and merged[-1].duty == span.duty and merged[-1].active == span.active:
            merged[-1] = ChannelSpan(merged[-1].start, span.end, span.duty, span.active)
        else:
            merged.append(span)
    return tuple(merged)


def schedule_to_timeline(schedule: RateSchedule, valve_model: DutyModel,
                         led_model: DutyModel) -> ActuatorTimeline:
    """Translate a rate schedule into actuator duty spans.

    The cold channel runs for the whole presentation at the duty that
    realizes the cooling rate.  On warming/hold segments the warm channel
    supplies the difference between the segment's target rate and the
    still-running cooling rate.
    """
    base_rate = schedule.base_cooling_rate
    valve_duty = invert_duty(valve_model, base_rate)
    valve_spans = [ChannelSpan(0.0, schedule.duration_s, valve_duty, True)]
    led_spans = []
    for index, seg in enumerate(schedule.segments):
        if seg.warm_active:
            warm_rate = seg.rate_c_per_s - base_rate
            try:
                led_duty = invert_duty(led_model, warm_rate)
            except UnreachableRateError as exc:
                raise UnreachableRateError(
                    exc.channel, exc.target_rate, exc.rate_min, exc.rate_max,
                    segment_index=index) from exc
            led_spans.append(ChannelSpan(seg.start_s, seg.end_s, led_duty, True))
        else:
            led_spans.append(ChannelSpan(seg.start_s, seg.end_s, 0.0, False))
    return ActuatorTimeline(_merge_spans(valve_spans), _merge_spans(led_spans),
                            schedule.duration_s)


@dataclass(frozen=True)
class PwmEdge:
    time: float
    on: bool


@dataclass(frozen=True)
class PwmWaveform:
    frequency: float
    duty: float
    duration: float
    edges: tuple[PwmEdge, ...]

    def on_fraction(self) -> float:
        """Fraction of the waveform duration spent on."""
        on_time = 0.0
        for i, edge in enumerate(self.edges):
            if edge.on:
                end = (self.edges[i + 1].time if i + 1 < len(self.edges)
                       else self.duration)
                on_time += end - edge.time
        return on_time / self.duration


def pwm_waveform(duty: float, frequency: float, duration: float) -> PwmWaveform:
    """Edge list for a PWM carrier: on for duty/frequency at each period start."""
    if not 0.0 <= duty <= 1.0:
        raise ValidationError("duty must lie in [0, 1]")
    if not frequency > 0 or not duration > 0:
        raise ValidationError("frequency and duration must be positive")
    if duty == 0.0:
        return PwmWaveform(frequency, duty, duration, (PwmEdge(0.0, False),))
    if duty == 1.0:
        return PwmWaveform(frequency, duty, duration, (PwmEdge(0.0, True),))
    edges = []
    period = 0
    while True:
        start = period / frequency
        if start >= duration:
            break
        edges.append(PwmEdge(start, True))
        off = start + duty / frequency
        if off < duration:
            edges.append(PwmEdge(off, False))
        period += 1
    return PwmWaveform(frequency, duty, duration, tuple(edges))


def _span_lookup(spans: Sequence[ChannelSpan], time: float) -> ChannelSpan:
    for span in spans:
        if span.start <= time < span.end:
            return span
    return ChannelSpan(time, time, 0.0, False)


def run_control(timeline: ActuatorTimeline, plant: SkinPlant, dt: float = 0.001,
                log_rate: float = 100.0) -> Trace:
    """Step the plant under a timeline and log at the given rate.

    Segment boundaries are snapped to the nearest step; an active span
    that would vanish entirely in the snapping is an error.  The
    returned trace covers t = 0 through the end of the timeline
    inclusive.
    """
    if not dt > 0 or not log_rate > 0:
        raise ValidationError("dt and log_rate must be positive")
    total_ticks = int(round(timeline.duration / dt))

    # Boundaries snap to the nearest step (that is always within half a
    # step); a nonempty active span must still survive the snapping.
    boundaries = {0, total_ticks}
    for spans in (timeline.valve, timeline.led):
        for span in spans:
            span_ticks = []
            for t in (span.start, span.end):
                tick = min(int(round(t / dt)), total_ticks)
                span_ticks.append(tick)
                boundaries.add(tick)
            if span.active and span.end > span.start and span_ticks[0] == span_ticks[1]:
                raise ValidationError(
                    f"active span [{span.start}, {span.end}) collapses to zero steps "
                    f"at dt={dt}")
    ticks = sorted(boundaries)

    n_log = total_ticks + 1
    temp = np.empty(n_log)
    duty_valve = np.zeros(n_log)
    duty_led = np.zeros(n_log)
    valve_on = np.zeros(n_log, dtype=bool)
    led_on = np.zeros(n_log, dtype=bool)
    temp[0] = plant.t_skin

    for t0, t1 in zip(ticks[:-1], ticks[1:]):
        n = t1 - t0
        if n == 0:
            continue
        mid = (t0 + 0.5) * dt
        vspan = _span_lookup(timeline.valve, mid)
        lspan = _span_lookup(timeline.led, mid)
        temps = plant.run_span(
            duty_valve=vspan.duty if vspan.active else 0.0,
            duty_led=lspan.duty if lspan.active else 0.0,
            valve_on=vspan.active, led_on=lspan.active, dt=dt, n_steps=n)
        temp[t0 + 1:t1 + 1] = temps
        duty_valve[t0:t1] = vspan.duty if vspan.active else 0.0
        duty_led[t0:t1] = lspan.duty if lspan.active else 0.0
        valve_on[t0:t1] = vspan.active
        led_on[t0:t1] = lspan.active
    # Hold the last actuator state on the final logged sample.
    if total_ticks > 0:
        duty_valve[-1] = duty_valve[-2]
        duty_led[-1] = duty_led[-2]
        valve_on[-1] = valve_on[-2]
        led_on[-1] = led_on[-2]

    log_every = max(1, int(round(1.0 / (log_rate * dt))))
    idx = np.arange(0, n_log, log_every)
    if idx[-1] != n_log - 1:
        idx = np.append(idx, n_log - 1)
    if abs(log_every * dt - 1.0 / log_rate) < 1e-12:
        # Aligned subsampling: emit exact log-grid timestamps.
        time = (idx // log_every) / log_rate
        if idx[-1] % log_every:
            time[-1] = idx[-1] * dt
    else:
        time = idx * dt
    return Trace(np.asarray(time, dtype=float), temp[idx], duty_valve[idx],
                 duty_led[idx], valve_on[idx], led_on[idx])
