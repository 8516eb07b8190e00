"""Airport-carrier buffer statistics, DelayAbsorbed labels and absorption analytics."""
from __future__ import annotations

import csv
from collections import defaultdict
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import NoTurnaroundData
from .ingest import FlightRecord
from .rotation import RotationLink

BUFFER_FLOOR = 5
PROFILE_BINS = ((0, 15), (15, 30), (30, 60), (60, 90), (90, 120))
DELAY_CATEGORIES = (
    ("early_or_on_time", None, 0),
    ("1-15", 0, 15),
    ("16-30", 15, 30),
    ("31-60", 30, 60),
    ("61-120", 60, 120),
    (">120", 120, None),
)


class InfeasibleSchedule(ValueError):
    def __init__(self):
        super().__init__("infeasible schedule")


@dataclass(frozen=True)
class BufferStats:
    airport: str
    carrier: str
    mean_buffer_min: float
    n_samples: int
    source: str = "pair"  # "pair", "airport" or "global"

    @property
    def fallback(self) -> bool:
        return self.source != "pair"


class BufferTable(Mapping):
    """(airport, carrier) -> BufferStats with the pair -> airport -> global fallback.

    Iteration covers pairs seen while fitting; :meth:`lookup` also resolves
    unseen pairs through the fallback chain.
    """

    def __init__(self, pairs: dict, airports: dict, global_mean: float, global_n: int, floor: int):
        self._pairs = pairs
        self.airports = airports
        self.global_mean = global_mean
        self.global_n = global_n
        self.floor = floor

    def __getitem__(self, key):
        return self._pairs[key]

    def __iter__(self):
        return iter(sorted(self._pairs))

    def __len__(self):
        return len(self._pairs)

    def _fallback(self, airport: str, carrier: str, n: int) -> BufferStats:
        mean_n = self.airports.get(airport)
        if mean_n is not None and mean_n[1] >= self.floor:
            return BufferStats(airport, carrier, mean_n[0], n, "airport")
        return BufferStats(airport, carrier, self.global_mean, n, "global")

    def lookup(self, airport: str, carrier: str) -> BufferStats:
        got = self._pairs.get((airport, carrier))
        return got if got is not None else self._fallback(airport, carrier, 0)

    def to_rows(self) -> list[list]:
        return [[s.airport, s.carrier, repr(s.mean_buffer_min), s.n_samples, s.source]
                for s in (self._pairs[k] for k in self)]

    def as_dict(self) -> dict:
        return {
            "floor": self.floor,
            "global": {"mean_buffer_min": self.global_mean, "n_samples": self.global_n},
            "airports": {a: {"mean_buffer_min": m, "n_samples": n} for a, (m, n) in sorted(self.airports.items())},
            "pairs": [{"airport": s.airport, "carrier": s.carrier, "mean_buffer_min": s.mean_buffer_min,
                       "n_samples": s.n_samples, "source": s.source} for s in self.values()],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BufferTable":
        pairs = {(p["airport"], p["carrier"]): BufferStats(p["airport"], p["carrier"], p["mean_buffer_min"],
                                                           p["n_samples"], p["source"]) for p in doc["pairs"]}
        airports = {a: (v["mean_buffer_min"], v["n_samples"]) for a, v in doc["airports"].items()}
        return cls(pairs, airports, doc["global"]["mean_buffer_min"], doc["global"]["n_samples"], doc["floor"])


def compute_buffer_stats(links: Iterable[RotationLink], floor: int = BUFFER_FLOOR) -> BufferTable:
    """Mean (scheduled - actual) turnaround per turnaround airport and carrier.

    Overnight links are skipped. Pairs with fewer than ``floor`` links take the
    airport mean, or the global mean if the airport is sparse too.
    """
    pair_sum: dict = defaultdict(int)
    pair_n: dict = defaultdict(int)
    apt_sum: dict = defaultdict(int)
    apt_n: dict = defaultdict(int)
    total = n = 0
    for link in links:
        if link.overnight:
            continue
        b = link.sched_turnaround_min - link.actual_turnaround_min
        key = (link.airport, link.carrier)
        pair_sum[key] += b
        pair_n[key] += 1
        apt_sum[link.airport] += b
        apt_n[link.airport] += 1
        total += b
        n += 1
    if n == 0:
        raise NoTurnaroundData()
    airports = {a: (apt_sum[a] / apt_n[a], apt_n[a]) for a in sorted(apt_n)}
    table = BufferTable({}, airports, total / n, n, floor)
    for key in sorted(pair_n):
        cnt = pair_n[key]
        if cnt >= floor:
            table._pairs[key] = BufferStats(key[0], key[1], pair_sum[key] / cnt, cnt)
        else:
            table._pairs[key] = table._fallback(key[0], key[1], cnt)
    return table


def table_from_buffers(buffers: Mapping) -> BufferTable:
    """Wrap externally known per-pair buffers (e.g. simulation truth) as a table."""
    pairs = {k: BufferStats(k[0], k[1], float(v), 1, "pair") for k, v in buffers.items()}
    vals = [float(v) for v in buffers.values()]
    return BufferTable(pairs, {}, sum(vals) / len(vals), len(vals), floor=1)


@dataclass(frozen=True)
class AbsorptionLabel:
    link: RotationLink
    delta_min: int
    buffer_ref_min: float
    absorbed: bool


def is_label_eligible(link: RotationLink) -> bool:
    return link.prev_delay_min > 0 and not link.overnight


def _buffer_ref(stats, airport: str, carrier: str) -> float:
    if isinstance(stats, BufferTable):
        return stats.lookup(airport, carrier).mean_buffer_min
    return stats[(airport, carrier)].mean_buffer_min


def label_link(link: RotationLink, stats) -> AbsorptionLabel:
    delta = link.prev_delay_min - link.dep_delay_min
    ref = _buffer_ref(stats, link.airport, link.carrier)
    return AbsorptionLabel(link, delta, ref, delta >= ref)


def label_delay_absorbed(links: Iterable[RotationLink], stats) -> list[AbsorptionLabel]:
    """DelayAbsorbed for every non-overnight link with positive inherited delay."""
    return [label_link(link, stats) for link in links if is_label_eligible(link)]


def turnover_index(link: RotationLink) -> float:
    if link.sched_turnaround_min <= 0:
        raise InfeasibleSchedule()
    return link.actual_turnaround_min / link.sched_turnaround_min


@dataclass(frozen=True)
class AirportTurnover:
    airport: str
    traffic: int
    mean_turnover_index: float
    excluded_infeasible: int = 0


def airport_turnover_summary(links: Iterable[RotationLink]) -> list[AirportTurnover]:
    """Mean turnover index per turnaround airport, busiest first."""
    sums: dict = defaultdict(float)
    counts: dict = defaultdict(int)
    bad: dict = defaultdict(int)
    for link in links:
        if link.overnight:
            continue
        try:
            sums[link.airport] += turnover_index(link)
            counts[link.airport] += 1
        except InfeasibleSchedule:
            bad[link.airport] += 1
    rows = [AirportTurnover(a, counts[a], sums[a] / counts[a], bad[a]) for a in counts]
    return sorted(rows, key=lambda r: (-r.traffic, r.airport))


@dataclass(frozen=True)
class ProfileBin:
    lo: int
    hi: int
    count: int
    mean_absorbed_min: float | None


@dataclass(frozen=True)
class AbsorptionProfile:
    airport: str
    date: object | None
    bins: tuple[ProfileBin, ...]


def profile_bin(prev_delay: float) -> int | None:
    """Index of the (lo, hi] bin holding ``prev_delay``, or None outside (0, 120]."""
    for i, (lo, hi) in enumerate(PROFILE_BINS):
        if lo < prev_delay <= hi:
            return i
    return None


def absorption_profile(links: Iterable[RotationLink], group_by: str = "airport") -> list[AbsorptionProfile]:
    """Mean absorbed delay (previous arrival delay minus departure delay) per upstream-delay bin."""
    if group_by not in ("airport", "airport+date"):
        raise ValueError(f"group_by must be 'airport' or 'airport+date', not {group_by!r}")
    acc: dict = defaultdict(lambda: [[0, 0] for _ in PROFILE_BINS])
    for link in links:
        if link.overnight:
            continue
        b = profile_bin(link.prev_delay_min)
        if b is None:
            continue
        key = (link.airport, link.curr_leg.flight_date if group_by == "airport+date" else None)
        cell = acc[key][b]
        cell[0] += 1
        cell[1] += link.prev_delay_min - link.dep_delay_min
    out = []
    for key in sorted(acc, key=lambda k: (k[0], k[1] or "")):
        bins = tuple(ProfileBin(lo, hi, n, (s / n) if n else None)
                     for (lo, hi), (n, s) in zip(PROFILE_BINS, acc[key]))
        out.append(AbsorptionProfile(key[0], key[1], bins))
    return out


def delay_category_histogram(flights: Iterable[FlightRecord]) -> dict:
    counts = {name: 0 for name, _, _ in DELAY_CATEGORIES}
    total = delayed = 0
    delay_sum = 0
    for f in flights:
        d = f.dep_delay_min
        if d is None:
            continue
        total += 1
        delay_sum += d
        delayed += d > 15
        for name, lo, hi in DELAY_CATEGORIES:
            if (lo is None or d > lo) and (hi is None or d <= hi):
                counts[name] += 1
                break
    return {
        "counts": counts,
        "n": total,
        "mean_dep_delay_min": delay_sum / total if total else None,
        "dep_del15_rate": delayed / total if total else None,
    }


def airport_day_delays(flights: Iterable[FlightRecord]) -> list[tuple]:
    """(airport, date, n, mean departure delay) per origin airport and flight date."""
    acc: dict = defaultdict(lambda: [0, 0])
    for f in flights:
        if f.dep_delay_min is None:
            continue
        cell = acc[(f.origin, f.flight_date)]
        cell[0] += 1
        cell[1] += f.dep_delay_min
    return [(a, d, n, s / n) for (a, d), (n, s) in sorted(acc.items())]


# --- delimited writers -------------------------------------------------------

def _writer(path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def _num(v):
    return "" if v is None else repr(float(v))


def write_buffer_stats(table: BufferTable, path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["airport", "carrier", "mean_buffer_min", "n_samples", "source"])
        w.writerows(table.to_rows())


def write_labels(labels: Sequence[AbsorptionLabel], path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["curr_flight", "airport", "carrier", "prev_delay_min", "dep_delay_min",
                    "delta_min", "buffer_ref_min", "delay_absorbed"])
        for lab in labels:
            ln = lab.link
            w.writerow([ln.curr_leg.key, ln.airport, ln.carrier, ln.prev_delay_min, ln.dep_delay_min,
                        lab.delta_min, _num(lab.buffer_ref_min), int(lab.absorbed)])


def write_turnover_summary(rows: Sequence[AirportTurnover], path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["airport", "traffic", "mean_turnover_index", "excluded_infeasible"])
        for r in rows:
            w.writerow([r.airport, r.traffic, _num(r.mean_turnover_index), r.excluded_infeasible])


def write_profiles(profiles: Sequence[AbsorptionProfile], path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["airport", "date", "bin_lo", "bin_hi", "count", "mean_absorbed_min"])
        for p in profiles:
            for b in p.bins:
                w.writerow([p.airport, p.date.isoformat() if p.date else "", b.lo, b.hi, b.count,
                            _num(b.mean_absorbed_min)])


def write_delay_histogram(hist: dict, path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["category", "count", "share"])
        for name, cnt in hist["counts"].items():
            w.writerow([name, cnt, _num(cnt / hist["n"]) if hist["n"] else ""])


def write_airport_day_delays(rows: Sequence[tuple], path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["airport", "date", "n_flights", "mean_dep_delay_min"])
        for a, d, n, m in rows:
            w.writerow([a, d.isoformat(), n, _num(m)])
