"""Flight and weather record ingestion.

Reads the BTS on-time-performance column subset and the NOAA LCD hourly
subset, validates rows, drops non-operated flights and attaches the latest
prior weather observation at the departure airport.

All timestamps are naive local airport times.
"""
from __future__ import annotations

import bisect
import csv
import datetime as dt
import json
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DataError, SchemaError

MINUTE = dt.timedelta(minutes=1)
DAY = dt.timedelta(days=1)

DEFAULT_FLIGHT_SCHEMA = {
    "flight_date": "FlightDate",
    "carrier": "Operating_Airline",
    "tail_number": "Tail_Number",
    "origin": "Origin",
    "dest": "Dest",
    "sched_dep": "CRSDepTime",
    "sched_arr": "CRSArrTime",
    "actual_dep": "DepTime",
    "actual_arr": "ArrTime",
    "dep_delay": "DepDelay",
    "distance": "Distance",
    "cancelled": "Cancelled",
    "diverted": "Diverted",
    "day_of_week": "DayOfWeek",
    "dep_time_block": "DepTimeBlk",
}

WEATHER_FIELDS = {
    "wind_speed": "HourlyWindSpeed",
    "precipitation": "HourlyPrecipitation",
    "visibility": "HourlyVisibility",
    "relative_humidity": "HourlyRelativeHumidity",
}
WEATHER_RANGES = {
    "wind_speed": (0.0, None),
    "precipitation": (0.0, None),
    "visibility": (0.0, None),
    "relative_humidity": (0.0, 100.0),
}
TRACE_PRECIP = 0.005

_HHMM = re.compile(r"^\d{1,4}$")
_NUMERIC_WITH_FLAG = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+))[A-Za-z*]*$")


class RowError(ValueError):
    """A single malformed row; ``reason`` is the report bucket."""

    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class FlightRecord:
    flight_date: dt.date
    carrier: str
    tail_number: str | None
    origin: str
    dest: str
    sched_dep: dt.datetime
    sched_arr: dt.datetime
    actual_dep: dt.datetime | None
    actual_arr: dt.datetime | None
    dep_delay_min: int | None
    distance: float
    cancelled: bool
    diverted: bool
    day_of_week: int
    dep_time_block: str
    row: int = 0  # position in the source file, used for tie-breaks

    @property
    def key(self) -> str:
        tail = self.tail_number or "-"
        return f"{self.carrier}:{tail}:{self.origin}-{self.dest}:{self.sched_dep:%Y%m%d%H%M}"

    @property
    def arr_delay_min(self) -> int | None:
        if self.actual_arr is None:
            return None
        return minutes_between(self.sched_arr, self.actual_arr)


@dataclass(frozen=True)
class WeatherObservation:
    station_airport: str
    obs_time: dt.datetime
    wind_speed: float | None = None
    precipitation: float | None = None
    visibility: float | None = None
    relative_humidity: float | None = None


@dataclass(frozen=True)
class JoinedFlight:
    flight: FlightRecord
    weather: WeatherObservation | None

    @property
    def weather_missing(self) -> bool:
        return self.weather is None


@dataclass
class ParseReport:
    path: str
    rows_read: int = 0
    rows_kept: int = 0
    rejected: Counter = field(default_factory=Counter)
    notes: Counter = field(default_factory=Counter)

    def to_lines(self) -> list[str]:
        lines = [f"path={self.path}", f"rows_read={self.rows_read}", f"rows_kept={self.rows_kept}"]
        lines += [f"rejected.{k}={v}" for k, v in sorted(self.rejected.items())]
        lines += [f"note.{k}={v}" for k, v in sorted(self.notes.items())]
        return lines

    def as_dict(self) -> dict:
        return {
            "path": self.path,
            "rows_read": self.rows_read,
            "rows_kept": self.rows_kept,
            "rejected": dict(sorted(self.rejected.items())),
            "notes": dict(sorted(self.notes.items())),
        }


@dataclass
class CleanReport:
    input_count: int = 0
    output_count: int = 0
    removed: Counter = field(default_factory=Counter)

    def to_lines(self) -> list[str]:
        lines = [f"input={self.input_count}", f"output={self.output_count}"]
        return lines + [f"removed.{k}={v}" for k, v in sorted(self.removed.items())]

    def as_dict(self) -> dict:
        return {"input": self.input_count, "output": self.output_count,
                "removed": dict(sorted(self.removed.items()))}


def minutes_between(start: dt.datetime, end: dt.datetime) -> int:
    """Signed whole minutes from ``start`` to ``end``."""
    return int((end - start) // MINUTE)


# --- field parsers -----------------------------------------------------------

def parse_hhmm(text: str) -> tuple[int, int]:
    """Parse a BTS HHMM cell into (hour, minute); ``"2400"`` yields (24, 0)."""
    s = text.strip()
    if s.endswith(".0"):  # spreadsheet exports sometimes write 830.0
        s = s[:-2]
    if not _HHMM.match(s):
        raise RowError("invalid HHMM")
    s = s.zfill(4)
    hh, mm = int(s[:2]), int(s[2:])
    if hh > 24 or mm > 59 or (hh == 24 and mm != 0):
        raise RowError("invalid HHMM")
    return hh, mm


def resolve_hhmm(date: dt.date, text: str) -> dt.datetime:
    hh, mm = parse_hhmm(text)
    if hh == 24:
        return dt.datetime.combine(date + dt.timedelta(days=1), dt.time(0, 0))
    return dt.datetime.combine(date, dt.time(hh, mm))


def format_hhmm(ts: dt.datetime) -> str:
    return f"{ts.hour:02d}{ts.minute:02d}"


def _parse_date(text: str) -> dt.date:
    s = text.strip()
    try:
        return dt.date.fromisoformat(s[:10])
    except ValueError:
        pass
    try:
        return dt.datetime.strptime(s.split(" ")[0], "%m/%d/%Y").date()
    except ValueError:
        raise RowError("invalid date") from None


def _parse_float(text: str | None, reason="invalid number") -> float | None:
    if text is None or not text.strip():
        return None
    try:
        v = float(text)
    except ValueError:
        raise RowError(reason) from None
    if v != v or v in (float("inf"), float("-inf")):
        raise RowError(reason)
    return v


def _parse_flag(text: str | None) -> bool:
    v = _parse_float(text)
    return bool(v) if v is not None else False


def time_block(ts: dt.datetime) -> str:
    if ts.hour < 6:
        return "0001-0559"
    return f"{ts.hour:02d}00-{ts.hour:02d}59"


def _required(row: Mapping[str, str], col: str) -> str:
    v = row.get(col)
    if v is None or not v.strip():
        raise RowError("missing field")
    return v.strip()


def _flight_from_row(row: Mapping[str, str], schema: Mapping[str, str], index: int) -> FlightRecord:
    c = schema
    date = _parse_date(_required(row, c["flight_date"]))
    carrier = _required(row, c["carrier"])
    origin = _required(row, c["origin"])
    dest = _required(row, c["dest"])
    tail = (row.get(c["tail_number"]) or "").strip() or None

    sched_dep = resolve_hhmm(date, _required(row, c["sched_dep"]))
    sched_arr = resolve_hhmm(date, _required(row, c["sched_arr"]))
    if sched_arr < sched_dep:
        sched_arr += DAY

    delay = _parse_float(row.get(c["dep_delay"]))
    dep_text = (row.get(c["actual_dep"]) or "").strip()
    actual_dep = None
    if dep_text:
        naive = resolve_hhmm(date, dep_text)
        candidates = [naive - DAY, naive, naive + DAY]
        if delay is not None:
            want = int(round(delay))
            matches = [t for t in candidates if minutes_between(sched_dep, t) == want]
            if not matches:
                raise RowError("inconsistent DepDelay")
            actual_dep = matches[0]
        else:
            actual_dep = min(candidates, key=lambda t: abs(minutes_between(sched_dep, t)))
    dep_delay = minutes_between(sched_dep, actual_dep) if actual_dep is not None else (
        int(round(delay)) if delay is not None else None)

    arr_text = (row.get(c["actual_arr"]) or "").strip()
    actual_arr = None
    if arr_text:
        anchor = actual_dep if actual_dep is not None else sched_dep
        actual_arr = resolve_hhmm(anchor.date(), arr_text)
        if actual_arr < anchor:
            actual_arr += DAY

    distance = _parse_float(row.get(c["distance"]), "invalid distance")
    if distance is None or distance < 0:
        raise RowError("invalid distance")

    dow_text = (row.get(c["day_of_week"]) or "").strip()
    if dow_text:
        try:
            dow = int(float(dow_text))
        except ValueError:
            raise RowError("invalid day of week") from None
        if not 1 <= dow <= 7:
            raise RowError("invalid day of week")
    else:
        dow = date.isoweekday()

    block = (row.get(c["dep_time_block"]) or "").strip() or time_block(sched_dep)

    return FlightRecord(
        flight_date=date, carrier=carrier, tail_number=tail, origin=origin, dest=dest,
        sched_dep=sched_dep, sched_arr=sched_arr, actual_dep=actual_dep, actual_arr=actual_arr,
        dep_delay_min=dep_delay, distance=distance,
        cancelled=_parse_flag(row.get(c["cancelled"])), diverted=_parse_flag(row.get(c["diverted"])),
        day_of_week=dow, dep_time_block=block, row=index,
    )


def _open_csv(path: Path):
    try:
        fh = open(path, newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return fh


def parse_flight_csv(path, schema: Mapping[str, str] | None = None) -> tuple[list[FlightRecord], ParseReport]:
    """Parse one BTS flight file.

    Malformed rows are rejected and counted under a reason; a missing required
    header column raises :class:`SchemaError`.
    """
    schema = dict(DEFAULT_FLIGHT_SCHEMA, **(schema or {}))
    path = Path(path)
    report = ParseReport(str(path))
    records: list[FlightRecord] = []
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(schema["flight_date"], path)
        header = [h.strip() for h in header]
        for col in schema.values():
            if col not in header:
                raise SchemaError(col, path)
        for i, cells in enumerate(reader):
            if not cells or all(not c.strip() for c in cells):
                continue
            report.rows_read += 1
            if len(cells) != len(header):
                report.rejected["malformed row"] += 1
                continue
            try:
                records.append(_flight_from_row(dict(zip(header, cells)), schema, i))
            except RowError as err:
                report.rejected[err.reason] += 1
    report.rows_kept = len(records)
    return records, report


def parse_weather_value(text: str | None) -> float | None:
    """NOAA LCD cell to float: blank is absent, ``T`` is trace, flag suffixes are stripped."""
    if text is None:
        return None
    s = text.strip()
    if not s:
        return None
    if s.upper() == "T":
        return TRACE_PRECIP
    m = _NUMERIC_WITH_FLAG.match(s)
    if m is None:
        raise RowError("unparseable value")
    return float(m.group(1))


def _parse_obs_time(text: str) -> dt.datetime:
    s = text.strip().replace(" ", "T")
    try:
        ts = dt.datetime.fromisoformat(s)
    except ValueError:
        raise RowError("invalid timestamp") from None
    return ts.replace(second=0, microsecond=0)


def parse_weather_csv(path, airport: str) -> tuple[list[WeatherObservation], ParseReport]:
    path = Path(path)
    report = ParseReport(str(path))
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if "DATE" not in header:
            raise SchemaError("DATE", path)
        present = {k: v for k, v in WEATHER_FIELDS.items() if v in header}
        if not present:
            raise SchemaError(WEATHER_FIELDS["wind_speed"], path)
        by_time: dict[dt.datetime, dict] = {}
        for cells in reader:
            if not cells or all(not c.strip() for c in cells):
                continue
            report.rows_read += 1
            if len(cells) != len(header):
                report.rejected["malformed row"] += 1
                continue
            row = dict(zip(header, cells))
            try:
                ts = _parse_obs_time(row["DATE"])
            except RowError as err:
                report.rejected[err.reason] += 1
                continue
            values = {}
            for name, col in present.items():
                try:
                    v = parse_weather_value(row.get(col))
                except RowError:
                    report.notes["unparseable value"] += 1
                    v = None
                lo, hi = WEATHER_RANGES[name]
                if v is not None and (v < lo or (hi is not None and v > hi)):
                    report.notes["out of range value"] += 1
                    v = None
                if v is not None:
                    values[name] = v
            if not values:
                report.rejected["all fields missing"] += 1
                continue
            prior = by_time.get(ts)
            if prior is None:
                by_time[ts] = values
            else:
                # same minute reported twice (e.g. FM-15 and FM-12): keep the first value per field
                report.rejected["duplicate timestamp"] += 1
                for k, v in values.items():
                    prior.setdefault(k, v)
    obs = [WeatherObservation(airport, ts, **by_time[ts]) for ts in sorted(by_time)]
    report.rows_kept = len(obs)
    return obs, report


def clean_flights(records: Iterable[FlightRecord]) -> tuple[list[FlightRecord], CleanReport]:
    """Keep operated flights with a tail number and both actual gate times.

    Each removed record is counted once, under the first failing reason.
    """
    report = CleanReport()
    kept = []
    for r in records:
        report.input_count += 1
        if r.cancelled:
            report.removed["cancelled"] += 1
        elif r.diverted:
            report.removed["diverted"] += 1
        elif r.tail_number is None:
            report.removed["no tail"] += 1
        elif r.actual_dep is None:
            report.removed["no actual departure"] += 1
        elif r.actual_arr is None:
            report.removed["no actual arrival"] += 1
        else:
            kept.append(r)
    report.output_count = len(kept)
    return kept, report


def join_weather(
    flights: Sequence[FlightRecord],
    weather: Mapping[str, Sequence[WeatherObservation]],
    window_min: float = 120,
) -> list[JoinedFlight]:
    """Attach the latest observation at the origin with obs_time <= sched_dep.

    Observations older than ``window_min`` minutes leave the flight without
    weather. Output order follows ``flights``.
    """
    if window_min <= 0:
        raise ValueError("window_min must be positive")
    window = dt.timedelta(minutes=window_min)
    times = {apt: [o.obs_time for o in obs] for apt, obs in weather.items()}
    out = []
    for f in flights:
        obs = weather.get(f.origin)
        match = None
        if obs:
            i = bisect.bisect_right(times[f.origin], f.sched_dep) - 1
            if i >= 0 and f.sched_dep - obs[i].obs_time <= window:
                match = obs[i]
        out.append(JoinedFlight(f, match))
    return out


# --- writers -----------------------------------------------------------------

FLIGHT_COLUMNS = list(DEFAULT_FLIGHT_SCHEMA.values())


def _fmt_num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def flight_to_row(r: FlightRecord) -> list[str]:
    next_day_midnight = (r.sched_dep.date() > r.flight_date and r.sched_dep.time() == dt.time(0, 0))
    return [
        r.flight_date.isoformat(), r.carrier, r.tail_number or "", r.origin, r.dest,
        "2400" if next_day_midnight else format_hhmm(r.sched_dep),
        format_hhmm(r.sched_arr),
        format_hhmm(r.actual_dep) if r.actual_dep else "",
        format_hhmm(r.actual_arr) if r.actual_arr else "",
        str(r.dep_delay_min) if r.dep_delay_min is not None else "",
        _fmt_num(r.distance),
        "1" if r.cancelled else "0", "1" if r.diverted else "0",
        str(r.day_of_week), r.dep_time_block,
    ]


def write_flight_csv(records: Iterable[FlightRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FLIGHT_COLUMNS)
        for r in records:
            w.writerow(flight_to_row(r))


def _fmt_weather(name: str, v: float | None) -> str:
    if v is None:
        return ""
    if name == "precipitation" and v == TRACE_PRECIP:
        return "T"
    return _fmt_num(v)


def write_weather_csv(obs: Iterable[WeatherObservation], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["STATION", "DATE", *WEATHER_FIELDS.values()])
        for o in obs:
            w.writerow([o.station_airport, o.obs_time.isoformat(timespec="seconds"),
                        *(_fmt_weather(k, getattr(o, k)) for k in WEATHER_FIELDS)])


def write_report(path, lines: Sequence[str]) -> None:
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- dataset directories -----------------------------------------------------

@dataclass
class Dataset:
    """A cleaned, weather-joined flight set loaded from a data directory."""
    flights: list[FlightRecord]
    weather: dict[str, list[WeatherObservation]]
    joined: list[JoinedFlight]
    parse_reports: list[ParseReport]
    clean_report: CleanReport

    def summary(self) -> dict:
        return {
            "parse": [r.as_dict() for r in self.parse_reports],
            "clean": self.clean_report.as_dict(),
            "weather_airports": sorted(self.weather),
            "weather_missing": sum(j.weather_missing for j in self.joined),
            "flights": len(self.flights),
        }


def flight_files(directory: Path) -> list[Path]:
    files = sorted(directory.glob("flights*.csv"))
    if not files:
        raise DataError(f"no flights*.csv files in {directory}")
    return files


def load_dataset(directory, window_min: float = 120, threads: int = 1) -> Dataset:
    """Load ``flights*.csv`` and ``weather/<AIRPORT>.csv`` from ``directory``.

    Files are parsed concurrently when ``threads > 1`` but merged in path
    order, so the result does not depend on ``threads``. Row indices are
    renumbered globally so file order breaks ties across files too.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"not a directory: {directory}")
    fpaths = flight_files(directory)
    wpaths = sorted((directory / "weather").glob("*.csv")) if (directory / "weather").is_dir() else []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        fres = list(pool.map(parse_flight_csv, fpaths))
        wres = list(pool.map(lambda p: parse_weather_csv(p, p.stem.upper()), wpaths))
    records, reports, offset = [], [], 0
    for recs, rep in fres:
        records += [_reindex(r, offset + r.row) for r in recs]
        offset += max((r.row for r in recs), default=-1) + 1
        reports.append(rep)
    weather = {}
    for p, (obs, rep) in zip(wpaths, wres):
        weather[p.stem.upper()] = obs
        reports.append(rep)
    clean, crep = clean_flights(records)
    return Dataset(clean, weather, join_weather(clean, weather, window_min), reports, crep)


def _reindex(r: FlightRecord, row: int) -> FlightRecord:
    return r if r.row == row else replace(r, row=row)


def write_dataset(ds: Dataset, directory) -> None:
    """Write a dataset back out in the same layout :func:`load_dataset` reads."""
    directory = Path(directory)
    (directory / "weather").mkdir(parents=True, exist_ok=True)
    write_flight_csv(ds.flights, directory / "flights.csv")
    for apt, obs in sorted(ds.weather.items()):
        write_weather_csv(obs, directory / "weather" / f"{apt}.csv")
    lines = []
    for rep in ds.parse_reports:
        lines += rep.to_lines()
    lines += ["clean." + ln for ln in ds.clean_report.to_lines()]
    write_report(directory / "ingest_report.txt", lines)
    (directory / "ingest_summary.json").write_text(json.dumps(ds.summary(), indent=2, sort_keys=True) + "\n")
