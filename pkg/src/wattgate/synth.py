"""Synthetic household generator with per-appliance ground truth.

Three duty models cover the common appliance shapes: cyclic
(compressor-style on/off alternation), burst (short random events at a
steady daily rate), and program (multi-phase cycles like a washer).
Event durations receive multiplicative jitter; between events an
appliance draws exactly its standby watts. The aggregate adds an
unknown baseload (a clipped random walk) and optional Gaussian sensor
noise, floored at zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ChannelSeries
from .errors import ConfigurationError

DAY_SECONDS = 86400.0


@dataclass(frozen=True)
class CyclicDuty:
    on_seconds: float
    off_seconds: float

    def __post_init__(self):
        if self.on_seconds <= 0 or self.off_seconds <= 0:
            raise ConfigurationError("cyclic on/off durations must be positive")


@dataclass(frozen=True)
class BurstDuty:
    events_per_day: float
    duration_seconds: float

    def __post_init__(self):
        if self.events_per_day <= 0 or self.duration_seconds <= 0:
            raise ConfigurationError("burst rate and duration must be positive")


@dataclass(frozen=True)
class ProgramPhase:
    duration_seconds: float
    watts: float

    def __post_init__(self):
        if self.duration_seconds <= 0:
            raise ConfigurationError("program phase duration must be positive")
        if self.watts < 0:
            raise ConfigurationError("program phase watts must be non-negative")


@dataclass(frozen=True)
class ProgramDuty:
    events_per_day: float
    phases: tuple[ProgramPhase, ...]

    def __post_init__(self):
        if self.events_per_day <= 0:
            raise ConfigurationError("program rate must be positive")
        if not self.phases:
            raise ConfigurationError("program needs at least one phase")


@dataclass(frozen=True)
class ApplianceSpec:
    name: str
    standby_watts: float
    duty: CyclicDuty | BurstDuty | ProgramDuty
    on_watts: float | None = None  # required for cyclic and burst duties
    jitter: float = 0.2            # +-20% multiplicative on event durations

    def __post_init__(self):
        if not self.name:
            raise ConfigurationError("appliance needs a name")
        if self.standby_watts < 0:
            raise ConfigurationError("standby watts must be non-negative")
        if not (0.0 <= self.jitter < 1.0):
            raise ConfigurationError("jitter must lie in [0, 1)")
        if isinstance(self.duty, (CyclicDuty, BurstDuty)):
            if self.on_watts is None or self.on_watts <= self.standby_watts:
                raise ConfigurationError(
                    f"appliance {self.name!r} needs on_watts above standby")


@dataclass(frozen=True)
class HouseholdSpec:
    appliances: tuple[ApplianceSpec, ...]
    days: float = 3.0
    sample_period: float = 10.0
    noise_sigma_watts: float = 5.0
    unknown_max_watts: float = 100.0
    unknown_step_watts: float = 3.0

    def __post_init__(self):
        if not self.appliances:
            raise ConfigurationError("household needs at least one appliance")
        names = [a.name for a in self.appliances]
        if len(set(names)) != len(names):
            raise ConfigurationError("appliance names must be unique")
        if self.days <= 0:
            raise ConfigurationError("days must be positive")
        if self.sample_period <= 0:
            raise ConfigurationError("sample period must be positive")
        if self.noise_sigma_watts < 0:
            raise ConfigurationError("noise sigma must be non-negative")
        if self.unknown_max_watts < 0 or self.unknown_step_watts < 0:
            raise ConfigurationError("unknown-load parameters must be non-negative")

    @property
    def n_samples(self) -> int:
        return int(round(self.days * DAY_SECONDS / self.sample_period))


@dataclass
class GeneratedHousehold:
    aggregate: ChannelSeries
    appliances: dict[str, ChannelSeries]
    unknown: np.ndarray
    seed: int


def _jit(rng, jitter):
    return rng.uniform(1.0 - jitter, 1.0 + jitter)


def _fill(values, period, t0, t1, watts):
    """Set samples whose time lies in [t0, t1) to watts."""
    n = values.size
    i0 = max(0, int(np.ceil(t0 / period - 1e-9)))
    i1 = min(n, int(np.ceil(t1 / period - 1e-9)))
    if i1 > i0:
        values[i0:i1] = watts


def _appliance_trace(spec: ApplianceSpec, n: int, period: float,
                     rng: np.random.Generator) -> np.ndarray:
    total = n * period
    values = np.full(n, spec.standby_watts)
    duty = spec.duty
    if isinstance(duty, CyclicDuty):
        # Random phase: enter the off period somewhere in its interior.
        t = -rng.uniform(0.0, duty.off_seconds)
        while t < total:
            t += duty.off_seconds * _jit(rng, spec.jitter)
            on_end = t + duty.on_seconds * _jit(rng, spec.jitter)
            _fill(values, period, t, on_end, spec.on_watts)
            t = on_end
    elif isinstance(duty, BurstDuty):
        mean_gap = DAY_SECONDS / duty.events_per_day
        t = 0.0
        while True:
            t += rng.exponential(mean_gap)
            if t >= total:
                break
            end = t + duty.duration_seconds * _jit(rng, spec.jitter)
            _fill(values, period, t, end, spec.on_watts)
            t = end
    else:
        mean_gap = DAY_SECONDS / duty.events_per_day
        t = 0.0
        while True:
            t += rng.exponential(mean_gap)
            if t >= total:
                break
            for phase in duty.phases:
                end = t + phase.duration_seconds * _jit(rng, spec.jitter)
                _fill(values, period, t, end, phase.watts)
                t = end
    return values


def _unknown_trace(n, max_watts, step_watts, rng) -> np.ndarray:
    steps = rng.normal(0.0, step_watts, n) if step_watts > 0 else np.zeros(n)
    u = np.empty(n)
    cur = 0.25 * max_watts
    for i in range(n):
        cur = min(max(cur + steps[i], 0.0), max_watts)
        u[i] = cur
    return u


def generate(spec: HouseholdSpec, seed: int) -> GeneratedHousehold:
    """Draw one household. The same (spec, seed) always produces the same
    samples; appliances use independent child streams so adding one does
    not reshuffle the others' randomness."""
    n = spec.n_samples
    if n < 1:
        raise ConfigurationError("household duration shorter than one sample")
    streams = np.random.SeedSequence(seed).spawn(len(spec.appliances) + 2)
    traces = {}
    for app, ss in zip(spec.appliances, streams):
        traces[app.name] = _appliance_trace(app, n, spec.sample_period,
                                            np.random.default_rng(ss))
    unknown = _unknown_trace(n, spec.unknown_max_watts, spec.unknown_step_watts,
                             np.random.default_rng(streams[-2]))
    noise_rng = np.random.default_rng(streams[-1])
    noise = (noise_rng.normal(0.0, spec.noise_sigma_watts, n)
             if spec.noise_sigma_watts > 0 else np.zeros(n))

    agg = unknown.copy()
    for name in traces:
        agg += traces[name]
    agg += noise
    np.maximum(agg, 0.0, out=agg)

    period = spec.sample_period
    aggregate = ChannelSeries(period, 0.0, agg, name="aggregate")
    appliances = {name: ChannelSeries(period, 0.0, vals, name=name)
                  for name, vals in traces.items()}
    return GeneratedHousehold(aggregate=aggregate, appliances=appliances,
                              unknown=unknown, seed=seed)


def default_household(days: float = 3.0, sample_period: float = 10.0,
                      noise_sigma_watts: float = 5.0) -> HouseholdSpec:
    """Three appliances spanning the duty models: a cycling fridge, a
    bursty kettle, and a multi-phase dish washer."""
    return HouseholdSpec(
        appliances=(
            ApplianceSpec("fridge", standby_watts=3.02, on_watts=95.0,
                          duty=CyclicDuty(on_seconds=900.0, off_seconds=1300.0)),
            ApplianceSpec("kettle", standby_watts=1.10, on_watts=2000.0,
                          duty=BurstDuty(events_per_day=10.0, duration_seconds=240.0)),
            ApplianceSpec("dish_washer", standby_watts=0.61,
                          duty=ProgramDuty(events_per_day=1.5, phases=(
                              ProgramPhase(480.0, 2100.0),
                              ProgramPhase(1800.0, 110.0),
                              ProgramPhase(600.0, 2050.0),
                              ProgramPhase(240.0, 60.0),
                          ))),
        ),
        days=days,
        sample_period=sample_period,
        noise_sigma_watts=noise_sigma_watts,
    )
