"""Time-series ingestion and synthesis.

CSV schema: `timestamp` in seconds, then `<bus>_pc_kw` consumption columns
for every non-substation bus and `<bus>_pg_kw` generation columns for every
inverter bus. Consumption reactive power is derived from a uniform power
factor, generation is clipped to the inverter nameplate (counted, not
fatal), and everything is converted to per unit against the feeder bases.

The synthesizer replaces non-redistributable metering data: a double-hump
diurnal load, a solar bell, and cloud transients whose one-minute swing is
rate-limited to a configured fraction of nameplate yet regularly comes
within 90% of that cap.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingColumn, NonMonotoneTime, ParseError, UnitError
from .network import GridState, NetworkModel

TRAIN_FRACTION = 0.7


def reactive_factor(power_factor: float) -> float:
    """tan(arccos(pf)) computed as sqrt(1 - pf^2)/pf; 0.8 -> 0.75 up to
    representation error in the literal 0.8 (a couple of ulps)."""
    if not 0.0 < power_factor <= 1.0:
        raise UnitError(f"power factor must be in (0, 1], got {power_factor}")
    return math.sqrt(1.0 - power_factor * power_factor) / power_factor


@dataclass
class TimeSeriesDataset:
    intervals: list
    interval_seconds: float
    train_idx: np.ndarray
    test_idx: np.ndarray
    provenance: dict
    load_kw: np.ndarray = None
    gen_kw: np.ndarray = None
    clip_count: int = 0

    def __post_init__(self):
        n = len(self.intervals)
        both = np.concatenate([self.train_idx, self.test_idx])
        if len(both) != n or not np.array_equal(np.sort(both), np.arange(n)):
            raise ValueError("split must partition the intervals")

    def __len__(self):
        return len(self.intervals)

    @property
    def train_states(self):
        return [self.intervals[i] for i in self.train_idx]

    @property
    def test_states(self):
        return [self.intervals[i] for i in self.test_idx]


def contiguous_split(n: int, train_fraction: float = TRAIN_FRACTION):
    """First part of the day trains, the tail is held out."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be strictly between 0 and 1")
    # nearest interval, so 0.7 of 2880 is 2016 despite 2880*0.7 rounding down
    cut = round(n * train_fraction)
    return np.arange(cut), np.arange(cut, n)


def _states_from_kw(model, timestamps, load_kw, gen_kw, power_factor):
    rq = reactive_factor(power_factor)
    states = []
    gen_col = {bus: j for j, bus in enumerate(model.inverter_buses)}
    for i, t in enumerate(timestamps):
        p_kw = -load_kw[i].copy()
        for bus, j in gen_col.items():
            p_kw[bus - 1] += gen_kw[i, j]
        q_c_kw = load_kw[i] * rq
        states.append(
            GridState(
                p=model.kw_to_pu(p_kw),
                q_c=model.kw_to_pu(q_c_kw),
                timestamp=float(t),
            )
        )
    return states


def load_timeseries(
    path,
    model: NetworkModel,
    power_factor: float = 0.8,
    train_fraction: float = TRAIN_FRACTION,
) -> TimeSeriesDataset:
    labels = model.labels
    pc_cols = [f"{labels[bus]}_pc_kw" for bus in range(1, model.n + 1)]
    pg_cols = [f"{labels[bus]}_pg_kw" for bus in model.inverter_buses]

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        pos = {name: k for k, name in enumerate(header)}
        for name in ["timestamp", *pc_cols, *pg_cols]:
            if name not in pos:
                raise MissingColumn(f"{path}: column {name!r} not found")
        timestamps, load_rows, gen_rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                t = float(row[pos["timestamp"]])
                load_rows.append([float(row[pos[c]]) for c in pc_cols])
                gen_rows.append([float(row[pos[c]]) for c in pg_cols])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            if timestamps and t <= timestamps[-1]:
                raise NonMonotoneTime(
                    f"{path}:{lineno}: timestamp {t} after {timestamps[-1]}"
                )
            timestamps.append(t)
    if not timestamps:
        raise ParseError(f"{path}: no data rows")

    load_kw = np.array(load_rows)
    gen_kw = np.array(gen_rows)
    nameplate_kw = model.pu_to_kw([inv.p_rated for inv in model.inverters])
    over = gen_kw > nameplate_kw
    clip_count = int(np.count_nonzero(over))
    gen_kw = np.minimum(gen_kw, nameplate_kw)

    states = _states_from_kw(model, timestamps, load_kw, gen_kw, power_factor)
    step = timestamps[1] - timestamps[0] if len(timestamps) > 1 else 0.0
    train_idx, test_idx = contiguous_split(len(states), train_fraction)
    return TimeSeriesDataset(
        intervals=states,
        interval_seconds=step,
        train_idx=train_idx,
        test_idx=test_idx,
        provenance={"file": str(path), "power_factor": power_factor},
        load_kw=load_kw,
        gen_kw=gen_kw,
        clip_count=clip_count,
    )


def write_timeseries(path, model: NetworkModel, dataset: TimeSeriesDataset):
    """Inverse of load_timeseries; floats carry 17 significant digits."""
    labels = model.labels
    header = (
        ["timestamp"]
        + [f"{labels[bus]}_pc_kw" for bus in range(1, model.n + 1)]
        + [f"{labels[bus]}_pg_kw" for bus in model.inverter_buses]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, state in enumerate(dataset.intervals):
            row = [f"{state.timestamp:.17g}"]
            row += [f"{v:.17g}" for v in dataset.load_kw[i]]
            row += [f"{v:.17g}" for v in dataset.gen_kw[i]]
            writer.writerow(row)


@dataclass
class SynthesisProfile:
    """Shapes for one synthetic day, amplitudes in kW at the meter."""

    n_intervals: int = 2880
    interval_seconds: float = 30.0
    load_peak_kw: float = 40.0
    load_base: float = 0.35  # nighttime floor as a fraction of peak
    morning_hour: float = 8.0
    evening_hour: float = 19.5
    hump_width_hours: float = 3.0
    load_jitter: float = 0.02
    solar_peak_frac: float = 0.9  # clear-sky noon output over nameplate
    sunrise_hour: float = 6.5
    sunset_hour: float = 19.5
    cloud_delta_frac: float = 0.15  # one-minute swing cap over nameplate
    cloud_event_rate: float = 0.02  # per-interval chance of a new target
    cloud_floor: float = 0.25
    power_factor: float = 0.8
    per_bus_load_scale: tuple = ()  # optional per-bus multipliers


def _diurnal_load(profile, hours, rng, n_buses):
    base = profile.load_base
    bump = (1.0 - base) * 0.5
    shape = (
        base
        + bump * np.exp(-0.5 * ((hours - profile.morning_hour) / profile.hump_width_hours) ** 2)
        + bump * np.exp(-0.5 * ((hours - profile.evening_hour) / profile.hump_width_hours) ** 2)
    )
    scale = np.ones(n_buses)
    if profile.per_bus_load_scale:
        scale = np.asarray(profile.per_bus_load_scale, dtype=float)
    # smooth per-bus jitter: bounded random walk around 1
    jitter = np.ones((len(hours), n_buses))
    if profile.load_jitter > 0:
        walk = np.cumsum(rng.normal(0, profile.load_jitter * 0.1, (len(hours), n_buses)), axis=0)
        jitter = 1.0 + np.clip(walk, -profile.load_jitter, profile.load_jitter)
    return profile.load_peak_kw * shape[:, None] * scale[None, :] * jitter


def _solar_fraction(profile, hours, rng):
    """Clear-sky bell times a rate-limited cloud attenuation, in [0, 1]."""
    up = (hours - profile.sunrise_hour) / (profile.sunset_hour - profile.sunrise_hour)
    bell = np.where(
        (up > 0) & (up < 1), np.sin(np.pi * np.clip(up, 0, 1)) ** 2, 0.0
    )
    bell *= profile.solar_peak_frac
    if profile.cloud_delta_frac <= 0:
        return bell
    # attenuation chases a piecewise-constant target; the output series is
    # then clamped so successive intervals never move faster than the
    # one-minute cap allows
    att = np.ones(len(hours))
    target = 1.0
    for i in range(1, len(hours)):
        if rng.random() < profile.cloud_event_rate:
            target = rng.uniform(profile.cloud_floor, 1.0)
        att[i] = target
    raw = bell * att
    cap = profile.cloud_delta_frac * profile.interval_seconds / 60.0
    out = np.empty_like(raw)
    out[0] = raw[0]
    for i in range(1, len(raw)):
        out[i] = np.clip(raw[i], out[i - 1] - cap, out[i - 1] + cap)
    return out


def synthesize_timeseries(
    model: NetworkModel,
    profile: SynthesisProfile | None = None,
    seed: int = 0,
    train_fraction: float = TRAIN_FRACTION,
) -> TimeSeriesDataset:
    profile = profile if profile is not None else SynthesisProfile()
    rng = np.random.default_rng(seed)
    n = profile.n_intervals
    timestamps = np.arange(n) * profile.interval_seconds
    hours = timestamps / 3600.0

    load_kw = _diurnal_load(profile, hours, rng, model.n)
    nameplate_kw = model.pu_to_kw([inv.p_rated for inv in model.inverters])
    gen_kw = np.zeros((n, len(nameplate_kw)))
    for j, cap_kw in enumerate(nameplate_kw):
        gen_kw[:, j] = cap_kw * _solar_fraction(profile, hours, rng)

    states = _states_from_kw(
        model, timestamps, load_kw, gen_kw, profile.power_factor
    )
    train_idx, test_idx = contiguous_split(n, train_fraction)
    return TimeSeriesDataset(
        intervals=states,
        interval_seconds=profile.interval_seconds,
        train_idx=train_idx,
        test_idx=test_idx,
        provenance={"synthetic": seed, "power_factor": profile.power_factor},
        load_kw=load_kw,
        gen_kw=gen_kw,
        clip_count=0,
    )
