"""Synthetic rotation networks with known delay propagation and absorption.

Each tail flies a chain of legs. A leg's departure delay is its newly formed
delay plus whatever inbound delay its ground buffer fails to absorb; the
generator keeps those hidden quantities so tests can check the pipeline
against them. Output flights use the BTS column subset that ``ingest`` reads.
"""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .ingest import FlightRecord, WeatherObservation, time_block, write_flight_csv, write_weather_csv

AIRPORT_CODES = ("ATL", "DFW", "DEN", "ORD", "LAX", "CLT", "MCO", "LAS", "PHX", "SEA", "MIA", "EWR",
                 "SFO", "JFK", "IAH", "BOS", "MSP", "DTW", "PHL", "LGA", "BWI", "SLC", "SAN", "IAD")
CARRIER_CODES = ("AA", "DL", "UA", "WN", "AS", "B6", "NK", "F9", "G4", "HA")
SCENARIOS = ("propagated_first", "new_first", "proportional")
OVERNIGHT_MIN = 300


@dataclass(frozen=True)
class SynthConfig:
    n_tails: int = 200
    legs_per_tail: int = 8
    legs_per_day: int = 4
    n_airports: int = 8
    n_carriers: int = 4
    disruption_prob: float = 0.1          # chance of newly formed delay in clear weather
    delay_range: tuple[int, int] = (5, 90)
    buffer_range: tuple[int, int] = (5, 60)  # per (airport, carrier) mean scheduled ground buffer
    buffer_jitter: int = 15                  # per-leg spread around the pair mean
    handling_range: tuple[int, int] = (25, 50)  # per (airport, carrier) minimum ground time, not observable
    enroute_range: tuple[int, int] = (-10, 5)   # arrival delay minus departure delay, routine legs
    airborne_delay_prob: float = 0.4            # chance of extra en-route delay (holding, reroutes)
    airborne_delay_range: tuple[int, int] = (10, 60)
    bad_weather_prob: float = 0.2        # per airport-day
    weather_delay_boost: float = 0.3     # added disruption probability per unit severity
    weather_slowdown_min: float = 20.0   # ground buffer lost per unit severity
    missing_weather_prob: float = 0.03
    scenario: str = "propagated_first"
    start_date: dt.date = dt.date(2023, 6, 1)
    seed: int = 0

    def validate(self) -> None:
        for name in ("n_tails", "legs_per_tail", "legs_per_day", "n_airports", "n_carriers"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be >= 1")
        if self.n_airports < 2:
            raise DataError("need at least two airports to route flights")
        if self.n_airports > len(AIRPORT_CODES) or self.n_carriers > len(CARRIER_CODES):
            raise DataError("too many airports or carriers for the code tables")
        for name in ("disruption_prob", "bad_weather_prob", "missing_weather_prob", "airborne_delay_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise DataError(f"{name} must lie in [0, 1]")
        if self.delay_range[0] < 0 or self.delay_range[1] < self.delay_range[0]:
            raise DataError("delay_range must be a nonnegative interval")
        for name in ("buffer_range", "handling_range"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise DataError(f"{name} must be a nonnegative interval")
        if self.buffer_jitter < 0:
            raise DataError("buffer_jitter must be nonnegative")
        if self.handling_range[0] + max(0, self.buffer_range[0] - self.buffer_jitter) <= 0:
            raise DataError("infeasible config: legs would overlap at zero turnaround")
        if self.scenario not in SCENARIOS:
            raise DataError(f"scenario must be one of {SCENARIOS}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start_date"] = self.start_date.isoformat()
        d["delay_range"] = list(self.delay_range)
        d["buffer_range"] = list(self.buffer_range)
        d["handling_range"] = list(self.handling_range)
        d["enroute_range"] = list(self.enroute_range)
        d["airborne_delay_range"] = list(self.airborne_delay_range)
        return d


def observed_delay(new_delay: float, inherited: float | None, buffer: float,
                   scenario: str = "propagated_first") -> float:
    """Departure delay of a leg given its inbound arrival delay and ground buffer.

    ``propagated_first`` lets the buffer soak up inbound delay and adds the new
    delay on top; ``new_first`` spends the buffer on the new delay first;
    ``proportional`` splits it by the two delays' shares.
    """
    inbound = max(0.0, inherited) if inherited is not None else 0.0
    buffer = max(0.0, buffer)
    if scenario == "propagated_first":
        return new_delay + max(0.0, inbound - buffer)
    if scenario == "new_first":
        left = max(0.0, buffer - new_delay)
        return max(0.0, new_delay - buffer) + max(0.0, inbound - left)
    if scenario == "proportional":
        total = new_delay + inbound
        if total == 0:
            return 0.0
        b_new = buffer * new_delay / total
        return max(0.0, new_delay - b_new) + max(0.0, inbound - (buffer - b_new))
    raise ValueError(f"unknown scenario {scenario!r}")


def propagate_chain(new_delays: Sequence[float], buffers: Sequence[float],
                    enroute: Sequence[float] | None = None, scenario: str = "propagated_first") -> list[float]:
    """Observed departure delays along one chain; ``buffers[i]`` sits before leg ``i + 1``."""
    out, arrival = [], None
    for i, n in enumerate(new_delays):
        o = observed_delay(n, arrival, buffers[i - 1] if i else 0.0, scenario) if i else float(n)
        out.append(o)
        arrival = o + (enroute[i] if enroute is not None else 0.0)
    return out


@dataclass(frozen=True)
class SynthFlight:
    """A generated leg with the ground truth the observable record hides."""
    record: FlightRecord
    new_delay_min: int
    inherited_delay_min: int | None   # previous leg's arrival delay, None for a first leg
    pair_buffer_min: int              # mean scheduled buffer of the (origin, carrier) pair
    buffer_min: int | None            # this leg's scheduled buffer after its inbound leg
    effective_buffer_min: int | None
    propagated_min: int
    overnight: bool
    eligible: bool                    # positive inherited delay, same-day, chainable
    absorbed_truth: bool | None
    propagation_driven: bool          # late by more than 15 only because of inherited delay


@dataclass
class SynthNetwork:
    config: SynthConfig
    flights: list[FlightRecord]
    truth: list[SynthFlight]
    weather: dict[str, list[WeatherObservation]]
    pair_buffers: dict[tuple[str, str], int]
    handling: dict[tuple[str, str], int]
    severity: dict[tuple[str, dt.date], float] = field(default_factory=dict)


def _severity_table(cfg: SynthConfig, airports, n_days) -> dict:
    rng = np.random.default_rng([cfg.seed, 1])
    table = {}
    for a in airports:
        for d in range(n_days):
            bad = rng.random() < cfg.bad_weather_prob
            s = rng.uniform(0.5, 1.5) if bad else rng.uniform(0.0, 0.15)
            table[(a, cfg.start_date + dt.timedelta(days=d))] = float(s)
    return table


def _weather_obs(cfg: SynthConfig, airports, severity, n_days) -> dict[str, list[WeatherObservation]]:
    out = {}
    for ai, a in enumerate(airports):
        rng = np.random.default_rng([cfg.seed, 3, ai])
        obs = []
        for d in range(-1, n_days + 1):
            day = cfg.start_date + dt.timedelta(days=d)
            s = severity.get((a, day), 0.0)
            for hour in range(24):
                draws = rng.normal(size=4)
                if rng.random() < cfg.missing_weather_prob:
                    continue
                wind = max(0.0, round(7 + 12 * s + 3 * draws[0]))
                p = 0.06 * s + 0.02 * draws[1]
                precip = 0.0 if s < 0.4 or p <= 0 else (0.005 if p < 0.01 else round(p, 2))
                vis = round(min(10.0, max(0.25, 10 - 6.5 * s + 0.8 * draws[2])), 2)
                rh = float(min(100, max(5, round(55 + 30 * s + 8 * draws[3]))))
                ts = dt.datetime.combine(day, dt.time(hour, 51))
                obs.append(WeatherObservation(a, ts, float(wind), precip, vis, rh))
        out[a] = obs
    return out


def generate_network(config: SynthConfig, tail_order: Sequence[int] | None = None) -> SynthNetwork:
    """Simulate ``n_tails`` aircraft rotations; deterministic in ``config.seed``.

    Every tail draws from its own seeded stream, so the order tails are
    simulated in (``tail_order``) has no effect on the result.
    """
    cfg = config
    cfg.validate()
    airports = AIRPORT_CODES[:cfg.n_airports]
    carriers = CARRIER_CODES[:cfg.n_carriers]
    g = np.random.default_rng([cfg.seed, 0])
    pair_buffers = {(a, c): int(g.integers(cfg.buffer_range[0], cfg.buffer_range[1] + 1))
                    for a in airports for c in carriers}
    handling = {(a, c): int(g.integers(cfg.handling_range[0], cfg.handling_range[1] + 1))
                for a in airports for c in carriers}
    dist = g.integers(150, 1300, size=(len(airports), len(airports)))
    dist = np.triu(dist, 1) + np.triu(dist, 1).T
    n_days = math.ceil(cfg.legs_per_tail / cfg.legs_per_day) + 1
    severity = _severity_table(cfg, airports, n_days)

    order = list(tail_order) if tail_order is not None else list(range(cfg.n_tails))
    if sorted(order) != list(range(cfg.n_tails)):
        raise ValueError("tail_order must be a permutation of range(n_tails)")
    per_tail = {t: _simulate_tail(cfg, t, airports, carriers, pair_buffers, handling, dist, severity) for t in order}
    truth = [leg for t in range(cfg.n_tails) for leg in per_tail[t]]
    flights = []
    for i, leg in enumerate(truth):
        rec = replace(leg.record, row=i)
        flights.append(rec)
        truth[i] = replace(leg, record=rec)
    weather = _weather_obs(cfg, airports, severity, n_days)
    return SynthNetwork(cfg, flights, truth, weather, pair_buffers, handling, severity)


def _simulate_tail(cfg, t, airports, carriers, pair_buffers, handling, dist, severity) -> list[SynthFlight]:
    rng = np.random.default_rng([cfg.seed, 2, t])
    carrier = carriers[int(rng.integers(len(carriers)))]
    tail = f"N{100 + t}{carrier}"
    here = int(rng.integers(len(airports)))
    legs: list[SynthFlight] = []
    day = 0
    sched_dep = _morning(cfg, day, rng)
    prev = None  # (record, arr_delay)
    today = 0
    leg_buffer = None
    for _ in range(cfg.legs_per_tail):
        if today == cfg.legs_per_day:
            day += 1
            today = 0
            sched_dep = max(_morning(cfg, day, rng), prev[0].sched_arr + dt.timedelta(minutes=OVERNIGHT_MIN + 60))
            leg_buffer = None
        dest = int(rng.integers(len(airports) - 1))
        dest += dest >= here
        miles = int(dist[here, dest])
        block = 30 + round(miles / 8)
        sched_arr = sched_dep + dt.timedelta(minutes=block)
        origin = airports[here]
        date = sched_dep.date()
        sev = severity.get((origin, date), 0.0)

        p = min(1.0, cfg.disruption_prob + cfg.weather_delay_boost * sev)
        new = int(rng.integers(cfg.delay_range[0], cfg.delay_range[1] + 1)) if rng.random() < p else 0
        enroute = int(rng.integers(cfg.enroute_range[0], cfg.enroute_range[1] + 1))
        if rng.random() < cfg.airborne_delay_prob:
            enroute += int(rng.integers(cfg.airborne_delay_range[0], cfg.airborne_delay_range[1] + 1))

        pair_b = pair_buffers[(origin, carrier)]
        if prev is None:
            inherited, eff, observed = None, None, new
        else:
            inherited = prev[1]
            ground_buffer = leg_buffer if leg_buffer is not None else (
                (sched_dep - prev[0].sched_arr) // dt.timedelta(minutes=1) - handling[(origin, carrier)])
            eff = max(0, int(round(ground_buffer - cfg.weather_slowdown_min * sev)))
            observed = int(round(observed_delay(new, inherited, eff, cfg.scenario)))
        propagated = observed - new if cfg.scenario == "propagated_first" else max(0, observed - new)

        actual_dep = sched_dep + dt.timedelta(minutes=observed)
        arr_delay = observed + enroute
        actual_arr = sched_arr + dt.timedelta(minutes=arr_delay)
        rec = FlightRecord(
            flight_date=date, carrier=carrier, tail_number=tail, origin=origin, dest=airports[dest],
            sched_dep=sched_dep, sched_arr=sched_arr, actual_dep=actual_dep, actual_arr=actual_arr,
            dep_delay_min=observed, distance=float(miles), cancelled=False, diverted=False,
            day_of_week=date.isoweekday(), dep_time_block=time_block(sched_dep),
        )
        overnight = False
        eligible = False
        absorbed = None
        if prev is not None:
            ground = (actual_dep - prev[0].actual_arr) // dt.timedelta(minutes=1)
            overnight = ground > OVERNIGHT_MIN
            chainable = prev[0].actual_arr < sched_dep
            eligible = chainable and inherited > 0 and not overnight
            if eligible:
                absorbed = (inherited - observed) >= pair_b
        legs.append(SynthFlight(rec, new, inherited, pair_b, leg_buffer, eff, propagated, overnight, eligible,
                                absorbed, observed > 15 and new <= 15))
        prev = (rec, arr_delay)
        here = dest
        today += 1
        pair = (airports[dest], carrier)
        jitter = int(rng.integers(-cfg.buffer_jitter, cfg.buffer_jitter + 1))
        leg_buffer = max(0, pair_buffers[pair] + jitter)
        sched_dep = sched_arr + dt.timedelta(minutes=handling[pair] + leg_buffer)
    return legs


def _morning(cfg: SynthConfig, day: int, rng) -> dt.datetime:
    minute = int(rng.integers(6 * 60, 9 * 60))
    return dt.datetime.combine(cfg.start_date + dt.timedelta(days=day), dt.time(minute // 60, minute % 60))


def truth_absorption_rate(truth: Sequence[SynthFlight]) -> float:
    flags = [leg.absorbed_truth for leg in truth if leg.eligible]
    if not flags:
        raise DataError("no eligible legs")
    return sum(flags) / len(flags)


def propagation_share(truth: Sequence[SynthFlight]) -> float:
    """Fraction of DepDel15 positives that would be on time without inherited delay."""
    pos = [leg for leg in truth if leg.record.dep_delay_min > 15]
    return sum(leg.propagation_driven for leg in pos) / len(pos) if pos else 0.0


TRUTH_COLUMNS = ["flight", "tail", "new_delay_min", "inherited_delay_min", "pair_buffer_min",
                 "buffer_min", "effective_buffer_min", "propagated_min", "dep_delay_min", "overnight", "eligible",
                 "absorbed_truth", "propagation_driven"]


def write_network(net: SynthNetwork, directory) -> None:
    """Write ``flights.csv``, ``weather/<AIRPORT>.csv`` and the ``truth.csv`` sidecar."""
    directory = Path(directory)
    (directory / "weather").mkdir(parents=True, exist_ok=True)
    write_flight_csv(net.flights, directory / "flights.csv")
    for a, obs in sorted(net.weather.items()):
        write_weather_csv(obs, directory / "weather" / f"{a}.csv")
    with open(directory / "truth.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_COLUMNS)
        for leg in net.truth:
            w.writerow([leg.record.key, leg.record.tail_number, leg.new_delay_min,
                        "" if leg.inherited_delay_min is None else leg.inherited_delay_min,
                        leg.pair_buffer_min, "" if leg.buffer_min is None else leg.buffer_min,
                        "" if leg.effective_buffer_min is None else leg.effective_buffer_min,
                        leg.propagated_min, leg.record.dep_delay_min, int(leg.overnight), int(leg.eligible),
                        "" if leg.absorbed_truth is None else int(leg.absorbed_truth),
                        int(leg.propagation_driven)])
    with open(directory / "buffers.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["airport", "carrier", "buffer_min", "handling_min"])
        for (a, c), b in sorted(net.pair_buffers.items()):
            w.writerow([a, c, b, net.handling[(a, c)]])


def read_buffers(path) -> dict[tuple[str, str], int]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {(r["airport"], r["carrier"]): int(r["buffer_min"]) for r in csv.DictReader(fh)}


def read_truth(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
